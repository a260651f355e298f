//! Weight container: magic `PDMW`, u16 version, u32 length + JSON header
//! (architecture and head sizes), u32 tensor count, then per tensor a u16
//! name length, the UTF-8 name, a u32 element count and little-endian f32 values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{ClassifierHeads, DescriptorNet, NetConfig};
use super::{DescriptorError, Result};

const MAGIC: &[u8; 4] = b"PDMW";
const VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    segmentations: usize,
    labels: usize,
}

/// Every stored tensor in file order.
fn named_tensors(net: &mut DescriptorNet, heads: &ClassifierHeads) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = net.params().into_iter().map(|(n, p)| (n, p.value.clone())).collect();
    for (name, bn) in net.batch_norms() {
        out.push((format!("{name}.running_mean"), bn.running_mean.clone()));
        out.push((format!("{name}.running_var"), bn.running_var.clone()));
    }
    out.push(("theta".into(), heads.theta.value.clone()));
    out
}

/// Inverse of [`named_tensors`]; `values` must follow the same order and sizes.
fn assign(net: &mut DescriptorNet, heads: &mut ClassifierHeads, values: Vec<Vec<f64>>) {
    let mut it = values.into_iter();
    for (_, p) in net.params() {
        p.value = it.next().expect("tensor count checked");
    }
    for (_, bn) in net.batch_norms() {
        bn.running_mean = it.next().expect("tensor count checked");
        bn.running_var = it.next().expect("tensor count checked");
    }
    heads.theta.value = it.next().expect("tensor count checked");
}

pub fn to_bytes(net: &DescriptorNet, heads: &ClassifierHeads) -> Vec<u8> {
    let mut net = net.clone();
    let header = serde_json::to_vec(&Header {
        net: net.config,
        segmentations: heads.segmentations,
        labels: heads.labels,
    })
    .expect("header serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let list = named_tensors(&mut net, heads);
    buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
    for (name, values) in list {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let out = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| DescriptorError::Format {
            path: self.path.into(),
            message: "truncated weight file".into(),
        })?;
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8], path: &str) -> Result<(DescriptorNet, ClassifierHeads)> {
    let fmt = |message: String| DescriptorError::Format {
        path: path.into(),
        message,
    };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(fmt("not a PDMW weight file".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| fmt(e.to_string()))?;
    let mut net = DescriptorNet::new(header.net, 0)?;
    let mut heads = ClassifierHeads::zeros(header.segmentations, header.labels, header.net.descriptor_dim);
    let expected = named_tensors(&mut net, &heads);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(fmt(format!("{count} tensors, architecture needs {}", expected.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, values) in &expected {
        let name_len = r.u16()? as usize;
        let found = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        if found != *name {
            return Err(fmt(format!("expected tensor {name}, found {found}")));
        }
        let n = r.u32()? as usize;
        if n != values.len() {
            return Err(fmt(format!("tensor {name} has {n} values, expected {}", values.len())));
        }
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64);
        }
        loaded.push(v);
    }
    if r.pos != bytes.len() {
        return Err(fmt("trailing bytes after the last tensor".into()));
    }
    assign(&mut net, &mut heads, loaded);
    Ok((net, heads))
}

pub fn save_weights(net: &DescriptorNet, heads: &ClassifierHeads, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net, heads))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<(DescriptorNet, ClassifierHeads)> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes, &path.display().to_string())
}

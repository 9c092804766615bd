//! Binary network checkpoints.
//!
//! ```text
//! "CTN1" | u32 layer count
//! per layer: u32 kind tag | u32 attr byte length | attrs
//!            | weight and bias tensors (parameterised layers only)
//! tensor:    u32 rank | u32 dims... | f32 data
//! ```
//!
//! Little-endian throughout. Kind tags: 0 Dense, 1 Conv2D, 2 ReLU,
//! 3 LeakyReLU, 4 ELU, 5 Concat, 6 Reshape. Integer attributes are u32,
//! slopes are f64. Concat sources are encoded as 0 for the network input and
//! `k + 1` for layer `k`.

use std::path::Path;

use crate::error::{NnError, Result};
use crate::layer::{LayerKind, Source};
use crate::network::Network;
use crate::real::Real;
use crate::tensor::Tensor;

pub const CTN1_MAGIC: &[u8; 4] = b"CTN1";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| NnError::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor<T: Real>(out: &mut Vec<u8>, t: &Tensor<T>) -> Result<()> {
    put_u32(out, t.shape().len())?;
    for &d in t.shape() {
        put_u32(out, d)?;
    }
    for &v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(())
}

fn attrs(kind: &LayerKind) -> Result<(u32, Vec<u8>)> {
    let mut a = Vec::new();
    let tag = match kind {
        LayerKind::Dense { inputs, outputs } => {
            put_u32(&mut a, *inputs)?;
            put_u32(&mut a, *outputs)?;
            0
        }
        LayerKind::Conv2d { in_channels, out_channels, kernel, dilation } => {
            for v in [in_channels, out_channels, kernel, dilation] {
                put_u32(&mut a, *v)?;
            }
            1
        }
        LayerKind::Relu => 2,
        LayerKind::LeakyRelu { slope } => {
            a.extend_from_slice(&slope.to_le_bytes());
            3
        }
        LayerKind::Elu { alpha } => {
            a.extend_from_slice(&alpha.to_le_bytes());
            4
        }
        LayerKind::Concat { sources } => {
            put_u32(&mut a, sources.len())?;
            for s in sources {
                put_u32(&mut a, s.node())?;
            }
            5
        }
        LayerKind::Reshape { shape } => {
            put_u32(&mut a, shape.len())?;
            for &d in shape {
                put_u32(&mut a, d)?;
            }
            6
        }
    };
    Ok((tag, a))
}

pub fn encode_network<T: Real>(net: &Network<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CTN1_MAGIC);
    put_u32(&mut out, net.layers().len())?;
    for layer in net.layers() {
        let (tag, a) = attrs(layer.kind())?;
        out.extend_from_slice(&tag.to_le_bytes());
        put_u32(&mut out, a.len())?;
        out.extend_from_slice(&a);
        if let Some(p) = layer.params() {
            put_tensor(&mut out, &p.weight)?;
            put_tensor(&mut out, &p.bias)?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor<T: Real>(&mut self) -> Result<Tensor<T>> {
        let rank = self.u32()?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.u32()?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NnError::Format("tensor size overflows".into()))?;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NnError::Format("tensor size overflows".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect();
        Tensor::new(shape, data)
    }
}

fn parse_kind(tag: u32, attrs: &[u8]) -> Result<LayerKind> {
    let mut r = Reader { bytes: attrs, pos: 0 };
    let kind = match tag {
        0 => LayerKind::Dense { inputs: r.u32()?, outputs: r.u32()? },
        1 => LayerKind::Conv2d { in_channels: r.u32()?, out_channels: r.u32()?, kernel: r.u32()?, dilation: r.u32()? },
        2 => LayerKind::Relu,
        3 => LayerKind::LeakyRelu { slope: r.f64()? },
        4 => LayerKind::Elu { alpha: r.f64()? },
        5 => {
            let n = r.u32()?;
            let mut sources = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                sources.push(match r.u32()? {
                    0 => Source::Input,
                    k => Source::Layer(k - 1),
                });
            }
            LayerKind::Concat { sources }
        }
        6 => {
            let n = r.u32()?;
            let mut shape = Vec::with_capacity(n.min(8));
            for _ in 0..n {
                shape.push(r.u32()?);
            }
            LayerKind::Reshape { shape }
        }
        other => return Err(NnError::Format(format!("unknown layer tag {other}"))),
    };
    if r.pos != attrs.len() {
        return Err(NnError::Format(format!("layer tag {tag} has trailing attribute bytes")));
    }
    Ok(kind)
}

pub fn decode_network<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CTN1_MAGIC {
        return Err(NnError::Format("bad magic, expected CTN1".into()));
    }
    let n = r.u32()?;
    let mut kinds = Vec::with_capacity(n.min(4096));
    let mut params = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        let tag = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let len = r.u32()?;
        let kind = parse_kind(tag, r.take(len)?)?;
        params.push(if kind.bias_len() > 0 { Some((r.tensor()?, r.tensor()?)) } else { None });
        kinds.push(kind);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format("trailing bytes after the last layer".into()));
    }
    Network::from_parts(kinds, params)
}

pub fn save_network<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    let bytes = encode_network(net)?;
    std::fs::write(path, bytes).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
}

pub fn load_network<T: Real>(path: &Path) -> Result<Network<T>> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
    decode_network(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkBuilder;

    fn sample() -> Network<f32> {
        NetworkBuilder::new()
            .conv(1, 2, 3, 2)
            .leaky_relu(0.05)
            .concat(vec![Source::Input, Source::Layer(1)])
            .conv(3, 1, 1, 1)
            .elu(0.7)
            .reshape(vec![16])
            .dense(16, 4)
            .relu()
            .build(11)
            .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let net = sample();
        let bytes = encode_network(&net).unwrap();
        assert_eq!(&bytes[..4], b"CTN1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 8);
        let back: Network<f32> = decode_network(&bytes).unwrap();
        assert_eq!(back.kinds(), net.kinds());
        for (a, b) in back.layers().iter().zip(net.layers()) {
            assert_eq!(a.params().map(|p| &p.weight), b.params().map(|p| &p.weight));
            assert_eq!(a.params().map(|p| &p.bias), b.params().map(|p| &p.bias));
        }
        let x = Tensor::from_fn(vec![2, 1, 4, 4], |i| (i as f32 * 0.37).sin());
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ctn");
        let net = sample();
        save_network(&net, &path).unwrap();
        let back: Network<f64> = load_network(&path).unwrap();
        assert_eq!(back.param_count(), net.param_count());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_network(&sample()).unwrap();
        assert!(decode_network::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_network::<f32>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_network::<f32>(&extra).is_err());
    }
}

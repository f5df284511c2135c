//! Network weights file.
//!
//! Layout: magic `SEVW`, version (u32 LE, = 1), temporal bin count B
//! (u32 LE), tensor count (u32 LE); then per tensor: name length (u16 LE),
//! UTF-8 name, rank (u8), each dimension (u32 LE), raw f32 LE values in
//! row-major order. Tensors appear per layer as `convN.weight`,
//! `convN.bias`, `bnN.gamma`, `bnN.beta`, `bnN.mean`, `bnN.var`.
//!
//! The first convolution consumes `2 * B` channels, positive-polarity bin
//! planes first; a file whose conv1 shape disagrees with its header B is
//! rejected.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::net::{
    BatchNormLayer, ConvLayer, Network, CONV_KERNELS, CONV_STRIDES, LAYERS,
};

const MAGIC: &[u8; 4] = b"SEVW";
const VERSION: u32 = 1;

const CONV_NAMES: [&str; LAYERS] = ["conv1", "conv2", "conv3", "conv4", "conv5"];
const BN_NAMES: [&str; LAYERS] = ["bn1", "bn2", "bn3", "bn4", "bn5"];

fn push_tensor(buf: &mut Vec<u8>, name: &str, dims: &[usize], values: &[f32]) {
    buf.write_u16::<LittleEndian>(name.len() as u16).unwrap();
    buf.extend_from_slice(name.as_bytes());
    buf.push(dims.len() as u8);
    for &d in dims {
        buf.write_u32::<LittleEndian>(d as u32).unwrap();
    }
    for &v in values {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
}

pub fn save_weights(net: &Network<f32>, bins: u32, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION).unwrap();
    buf.write_u32::<LittleEndian>(bins).unwrap();
    buf.write_u32::<LittleEndian>(6 * LAYERS as u32).unwrap();
    for i in 0..LAYERS {
        let conv = &net.convs()[i];
        push_tensor(
            &mut buf,
            &format!("{}.weight", CONV_NAMES[i]),
            &[conv.out_channels, conv.in_channels, conv.kh, conv.kw],
            &conv.weight,
        );
        push_tensor(
            &mut buf,
            &format!("{}.bias", CONV_NAMES[i]),
            &[conv.out_channels],
            &conv.bias,
        );
        let bn = &net.bns()[i];
        push_tensor(&mut buf, &format!("{}.gamma", BN_NAMES[i]), &[bn.channels()], &bn.gamma);
        push_tensor(&mut buf, &format!("{}.beta", BN_NAMES[i]), &[bn.channels()], &bn.beta);
        push_tensor(&mut buf, &format!("{}.mean", BN_NAMES[i]), &[bn.channels()], &bn.running_mean);
        push_tensor(&mut buf, &format!("{}.var", BN_NAMES[i]), &[bn.channels()], &bn.running_var);
    }
    atomic_write(path, &buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(
                "weights file",
                format!("unexpected end of file while reading {context}"),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, context: &str) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2, context)?))
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, context)?))
    }

    fn u8(&mut self, context: &str) -> Result<u8> {
        Ok(self.take(1, context)?[0])
    }
}

struct RawTensor {
    name: String,
    dims: Vec<usize>,
    values: Vec<f32>,
}

fn read_tensor(r: &mut Reader, index: usize) -> Result<RawTensor> {
    let header = format!("tensor {index} header");
    let name_len = r.u16(&header)? as usize;
    let name_bytes = r.take(name_len, &header)?;
    let name = std::str::from_utf8(name_bytes)
        .map_err(|_| Error::format("weights file", format!("tensor {index} name is not UTF-8")))?
        .to_string();
    let rank = r.u8(&format!("tensor `{name}`"))? as usize;
    if rank == 0 || rank > 4 {
        return Err(Error::format(
            "weights file",
            format!("tensor `{name}` has unsupported rank {rank}"),
        ));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r.u32(&format!("tensor `{name}` dims"))? as usize);
    }
    let count: usize = dims.iter().product();
    let bytes = r.take(count * 4, &format!("tensor `{name}` values"))?;
    let mut values = vec![0f32; count];
    LittleEndian::read_f32_into(bytes, &mut values);
    Ok(RawTensor { name, dims, values })
}

fn expect_vec(t: &RawTensor, name: &str, len: usize) -> Result<Vec<f32>> {
    if t.name != name {
        return Err(Error::format(
            "weights file",
            format!("expected tensor `{name}`, found `{}`", t.name),
        ));
    }
    if t.dims != [len] {
        return Err(Error::format(
            "weights file",
            format!("tensor `{name}` has shape {:?}, expected [{len}]", t.dims),
        ));
    }
    Ok(t.values.clone())
}

/// Load a weights file, returning the network and its temporal bin count.
pub fn load_weights(path: &Path) -> Result<(Network<f32>, u32)> {
    let data = std::fs::read(path)?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("weights file", "bad magic, expected SEVW"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            "weights file",
            format!("unsupported version {version}"),
        ));
    }
    let bins = r.u32("bin count")?;
    if bins == 0 {
        return Err(Error::format("weights file", "bin count must be >= 1"));
    }
    let count = r.u32("tensor count")? as usize;
    if count != 6 * LAYERS {
        return Err(Error::format(
            "weights file",
            format!("expected {} tensors, header says {count}", 6 * LAYERS),
        ));
    }

    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        tensors.push(read_tensor(&mut r, i)?);
    }
    if r.pos != data.len() {
        return Err(Error::format(
            "weights file",
            format!("{} trailing bytes after the last tensor", data.len() - r.pos),
        ));
    }

    let mut convs = Vec::with_capacity(LAYERS);
    let mut bns = Vec::with_capacity(LAYERS);
    let mut expected_in = 2 * bins as usize;
    for i in 0..LAYERS {
        let base = 6 * i;
        let w = &tensors[base];
        let weight_name = format!("{}.weight", CONV_NAMES[i]);
        if w.name != weight_name {
            return Err(Error::format(
                "weights file",
                format!("expected tensor `{weight_name}`, found `{}`", w.name),
            ));
        }
        if w.dims.len() != 4 {
            return Err(Error::format(
                "weights file",
                format!("tensor `{weight_name}` must be rank 4, got {}", w.dims.len()),
            ));
        }
        let (oc, ic, kh, kw) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
        if kh != CONV_KERNELS[i] || kw != CONV_KERNELS[i] {
            return Err(Error::format(
                "weights file",
                format!(
                    "tensor `{weight_name}` kernel {kh}x{kw}, expected {0}x{0}",
                    CONV_KERNELS[i]
                ),
            ));
        }
        if ic != expected_in {
            return Err(Error::format(
                "weights file",
                format!(
                    "tensor `{weight_name}` has {ic} input channels, expected {expected_in} \
                     (first layer must span 2 * B = {} channels)",
                    2 * bins
                ),
            ));
        }
        let mut conv = ConvLayer::zeros(CONV_NAMES[i], ic, oc, CONV_KERNELS[i], CONV_STRIDES[i]);
        conv.weight = w.values.clone();
        conv.bias = expect_vec(&tensors[base + 1], &format!("{}.bias", CONV_NAMES[i]), oc)?;

        let mut bn = BatchNormLayer::new(BN_NAMES[i], oc);
        bn.gamma = expect_vec(&tensors[base + 2], &format!("{}.gamma", BN_NAMES[i]), oc)?;
        bn.beta = expect_vec(&tensors[base + 3], &format!("{}.beta", BN_NAMES[i]), oc)?;
        bn.running_mean = expect_vec(&tensors[base + 4], &format!("{}.mean", BN_NAMES[i]), oc)?;
        bn.running_var = expect_vec(&tensors[base + 5], &format!("{}.var", BN_NAMES[i]), oc)?;

        convs.push(conv);
        bns.push(bn);
        expected_in = oc;
    }
    Ok((Network::from_layers(convs, bns)?, bins))
}

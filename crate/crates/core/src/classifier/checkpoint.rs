//! Versioned single-file checkpoint: config echo plus named parameter
//! tensors, little-endian f64 payloads. Writing the same parameters twice
//! produces byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::extractor::{ConvExtractor, ConvLayer};
use super::gru::GruParams;
use super::model::Params;
use super::{ClassifierConfig, ClassifierError};

const MAGIC: &[u8; 4] = b"CTSG";
const VERSION: u8 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ClassifierError + '_ {
    move |source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Tensor<'a> {
    name: &'a str,
    dims: Vec<u32>,
    data: Vec<f64>,
}

fn push1(out: &mut Vec<Tensor<'static>>, name: &'static str, a: &Array1<f64>) {
    out.push(Tensor {
        name,
        dims: vec![a.len() as u32],
        data: a.to_vec(),
    });
}

fn push2(out: &mut Vec<Tensor<'static>>, name: &'static str, a: &Array2<f64>) {
    out.push(Tensor {
        name,
        dims: vec![a.nrows() as u32, a.ncols() as u32],
        data: a.iter().copied().collect(),
    });
}

fn tensors_of(params: &Params) -> Vec<Tensor<'static>> {
    let mut out = Vec::new();
    let conv_names: [(&'static str, &'static str); 3] = [
        ("extractor.conv1.weight", "extractor.conv1.bias"),
        ("extractor.conv2.weight", "extractor.conv2.bias"),
        ("extractor.conv3.weight", "extractor.conv3.bias"),
    ];
    for (layer, (wname, bname)) in params.extractor.layers.iter().zip(conv_names) {
        out.push(Tensor {
            name: wname,
            dims: vec![layer.out_ch as u32, layer.in_ch as u32, 3, 3],
            data: layer.weight.clone(),
        });
        out.push(Tensor {
            name: bname,
            dims: vec![layer.out_ch as u32],
            data: layer.bias.clone(),
        });
    }
    push2(&mut out, "gru.wz", &params.gru.wz);
    push2(&mut out, "gru.wr", &params.gru.wr);
    push2(&mut out, "gru.wn", &params.gru.wn);
    push2(&mut out, "gru.uz", &params.gru.uz);
    push2(&mut out, "gru.ur", &params.gru.ur);
    push2(&mut out, "gru.un", &params.gru.un);
    push1(&mut out, "gru.bz", &params.gru.bz);
    push1(&mut out, "gru.br", &params.gru.br);
    push1(&mut out, "gru.bn", &params.gru.bn);
    push2(&mut out, "dense.w1", &params.w1);
    push1(&mut out, "dense.b1", &params.b1);
    push2(&mut out, "head.w2", &params.w2);
    push1(&mut out, "head.b2", &params.b2);
    out
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &ClassifierConfig,
    params: &Params,
) -> Result<(), ClassifierError> {
    let cfg_json = serde_json::to_vec(cfg)
        .map_err(|e| ClassifierError::Checkpoint(format!("config serialization: {e}")))?;
    let tensors = tensors_of(params);
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(t.dims.len() as u8);
        for d in &t.dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        if self.pos + n > self.buf.len() {
            return Err(ClassifierError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ClassifierError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ClassifierError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ClassifierConfig, Params), ClassifierError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut buf)
        .map_err(io_err(path))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ClassifierError::Checkpoint("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(ClassifierError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let cfg_len = r.u32()? as usize;
    let cfg: ClassifierConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| ClassifierError::Checkpoint(format!("config: {e}")))?;
    cfg.validate()?;
    let count = r.u32()? as usize;
    let mut tensors: Vec<(String, Vec<u32>, Vec<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| ClassifierError::Checkpoint("bad tensor name".into()))?;
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()?);
        }
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let raw = r.take(n * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, dims, data));
    }
    if r.pos != buf.len() {
        return Err(ClassifierError::Checkpoint("trailing bytes".into()));
    }
    rebuild_params(&cfg, &tensors)
        .map(|params| (cfg, params))
}

fn rebuild_params(
    cfg: &ClassifierConfig,
    tensors: &[(String, Vec<u32>, Vec<f64>)],
) -> Result<Params, ClassifierError> {
    let find = |name: &str| -> Result<&(String, Vec<u32>, Vec<f64>), ClassifierError> {
        tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| ClassifierError::Checkpoint(format!("missing tensor {name}")))
    };
    let mat = |name: &str| -> Result<Array2<f64>, ClassifierError> {
        let (_, dims, data) = find(name)?;
        if dims.len() != 2 {
            return Err(ClassifierError::Checkpoint(format!("{name} is not 2-d")));
        }
        Array2::from_shape_vec((dims[0] as usize, dims[1] as usize), data.clone())
            .map_err(|e| ClassifierError::Checkpoint(format!("{name}: {e}")))
    };
    let vec1 = |name: &str| -> Result<Array1<f64>, ClassifierError> {
        let (_, dims, data) = find(name)?;
        if dims.len() != 1 {
            return Err(ClassifierError::Checkpoint(format!("{name} is not 1-d")));
        }
        Ok(Array1::from_vec(data.clone()))
    };

    let mut layers = Vec::with_capacity(3);
    for idx in 1..=3 {
        let (_, dims, data) = find(&format!("extractor.conv{idx}.weight"))?;
        if dims.len() != 4 {
            return Err(ClassifierError::Checkpoint(format!(
                "extractor.conv{idx}.weight is not 4-d"
            )));
        }
        let (_, _, bias) = find(&format!("extractor.conv{idx}.bias"))?;
        layers.push(ConvLayer {
            weight: data.clone(),
            bias: bias.clone(),
            out_ch: dims[0] as usize,
            in_ch: dims[1] as usize,
        });
    }
    let extractor = ConvExtractor::from_parts(layers, cfg.feature_dim);
    let gru = GruParams {
        wz: mat("gru.wz")?,
        wr: mat("gru.wr")?,
        wn: mat("gru.wn")?,
        uz: mat("gru.uz")?,
        ur: mat("gru.ur")?,
        un: mat("gru.un")?,
        bz: vec1("gru.bz")?,
        br: vec1("gru.br")?,
        bn: vec1("gru.bn")?,
    };
    let params = Params {
        extractor,
        gru,
        w1: mat("dense.w1")?,
        b1: vec1("dense.b1")?,
        w2: mat("head.w2")?,
        b2: vec1("head.b2")?,
    };
    if params.w1.nrows() != cfg.t * cfg.rnn_units
        || params.w1.ncols() != cfg.dense_units
        || params.w2.ncols() != cfg.num_classes
    {
        return Err(ClassifierError::Checkpoint(
            "tensor shapes disagree with config".into(),
        ));
    }
    Ok(params)
}

//! Line-oriented text checkpoint.
//!
//! ```text
//! vie-checkpoint v1
//! variant prior=mixed-gpd encoder=iaf decoder=amnn prior_match=true
//! config latent_dim=4
//! …
//! param encoder.init.0 2 13 32
//! <13·32 whitespace-separated values>
//! ```
//!
//! Values use the shortest decimal rendering that parses back to the same
//! `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Result, VieError};

use super::config::TrainConfig;
use super::model::{Decoder, Encoder, HistoryRow, TrainedModel};
use super::variant::VariantSpec;

pub const CHECKPOINT_HEADER: &str = "vie-checkpoint v1";

pub(crate) fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(VieError::Parse { line, message: message.into() })
}

fn mlp_names(prefix: &str, count: usize, out: &mut Vec<String>) {
    out.extend((0..count).map(|k| format!("{prefix}.{k}")));
}

/// Names of the trainable tensors, in the order of [`model_tensors`].
fn model_names(m: &TrainedModel) -> Vec<String> {
    let mut v = Vec::new();
    match &m.encoder {
        Encoder::Flow(e) => {
            mlp_names("encoder.init", e.init.params.len(), &mut v);
            for (t, s) in e.steps.iter().enumerate() {
                mlp_names(&format!("encoder.step{t}"), s.params.len(), &mut v);
            }
        }
        Encoder::Implicit(e) => mlp_names("encoder.net", e.net.params.len(), &mut v),
    }
    if m.prior.is_some() {
        v.push("prior.raw_xi".into());
        v.push("prior.raw_sigma".into());
    }
    match &m.decoder {
        Decoder::Amnn(d) => {
            for (j, n) in d.nets.iter().enumerate() {
                mlp_names(&format!("decoder.net{j}"), n.params.len(), &mut v);
            }
            v.push("decoder.alpha".into());
            v.push("decoder.gamma".into());
        }
        Decoder::Mlp(d) => mlp_names("decoder.mlp", d.params.len(), &mut v),
        Decoder::Multiclass(d) => {
            for (j, n) in d.nets.iter().enumerate() {
                mlp_names(&format!("decoder.net{j}"), n.params.len(), &mut v);
            }
            v.push("decoder.weight".into());
            v.push("decoder.bias".into());
        }
    }
    if let Some(c) = &m.critic {
        mlp_names("critic", c.net.params.len(), &mut v);
    }
    v
}

fn model_tensors(m: &TrainedModel) -> Vec<&Tensor> {
    let mut v = m.encoder.params();
    if let Some(p) = &m.prior {
        v.push(&p.raw_xi);
        v.push(&p.raw_sigma);
    }
    v.extend(m.decoder.params());
    if let Some(c) = &m.critic {
        v.extend(c.net.params.iter());
    }
    v
}

fn model_tensors_mut(m: &mut TrainedModel) -> Vec<&mut Tensor> {
    let mut v = m.encoder.params_mut();
    if let Some(p) = &mut m.prior {
        v.push(&mut p.raw_xi);
        v.push(&mut p.raw_sigma);
    }
    v.extend(m.decoder.params_mut());
    if let Some(c) = &mut m.critic {
        v.extend(c.net.params.iter_mut());
    }
    v
}

/// Named blocks beyond the trainable tensors.
fn extra_blocks(m: &TrainedModel) -> Vec<(String, Tensor)> {
    let d = m.standardizer.mean.len();
    let rows: Vec<f64> = m.history.iter().flat_map(|r| r.values()).collect();
    vec![
        ("standardizer.mean".into(), Tensor::new(vec![d], m.standardizer.mean.clone()).expect("d values")),
        ("standardizer.std".into(), Tensor::new(vec![d], m.standardizer.std.clone()).expect("d values")),
        ("penalties".into(), Tensor::new(vec![2], vec![m.beta, m.lambda]).expect("two values")),
        ("history".into(), Tensor::new(vec![m.history.len(), 8], rows).expect("8 per row")),
        ("validation".into(), Tensor::new(vec![m.validation.len()], m.validation.clone()).expect("one per epoch")),
    ]
}

pub(crate) fn write_block(out: &mut String, name: &str, t: &Tensor) {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "param {name} {} {}", t.rank(), dims.join(" "));
    for row in t.data().chunks(16) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
}

pub fn to_text(m: &TrainedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_HEADER}");
    let _ = writeln!(out, "variant {}", m.variant);
    for (k, v) in m.config.to_pairs() {
        let _ = writeln!(out, "config {k}={v}");
    }
    for (name, t) in extra_blocks(m) {
        write_block(&mut out, &name, &t);
    }
    for (name, t) in model_names(m).iter().zip(model_tensors(m)) {
        write_block(&mut out, name, t);
    }
    out
}

pub fn save(m: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(m))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    from_text(&std::fs::read_to_string(path)?)
}

pub(crate) struct Block {
    pub name: String,
    pub line: usize,
    pub tensor: Tensor,
}

/// A parsed checkpoint-style document: metadata lines after the header and
/// before the first block, then named blocks.
pub(crate) struct Document {
    pub meta: Vec<(usize, String)>,
    pub blocks: Vec<Block>,
    pub last_line: usize,
}

impl Document {
    pub fn take(&mut self, name: &str) -> Result<Block> {
        match self.blocks.iter().position(|b| b.name == name) {
            Some(i) => Ok(self.blocks.remove(i)),
            None => parse_err(self.last_line, format!("missing block '{name}'")),
        }
    }

    /// Error on the first block nobody claimed.
    pub fn finish(&self) -> Result<()> {
        match self.blocks.first() {
            Some(b) => parse_err(b.line, format!("unexpected block '{}'", b.name)),
            None => Ok(()),
        }
    }
}

pub(crate) fn parse_document(text: &str, header: &str) -> Result<Document> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut last_line = match lines.next() {
        Some((n, l)) if l == header => n,
        Some((n, l)) => return parse_err(n, format!("expected '{header}', found '{l}'")),
        None => return parse_err(1, "empty checkpoint"),
    };
    let mut meta = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut pending: Option<(String, usize, Vec<usize>, Vec<f64>)> = None;
    for (n, l) in lines {
        last_line = n;
        if let Some((_, _, dims, vals)) = pending.as_mut() {
            let want: usize = dims.iter().product();
            if vals.len() < want {
                for tok in l.split_whitespace() {
                    let v = tok.parse::<f64>().map_err(|_| VieError::Parse { line: n, message: format!("bad value '{tok}'") })?;
                    vals.push(v);
                }
                if vals.len() > want {
                    return parse_err(n, format!("block holds more than {want} values"));
                }
                continue;
            }
        }
        if let Some((name, line, dims, vals)) = pending.take() {
            blocks.push(Block { name, line, tensor: Tensor::new(dims, vals)? });
        }
        if let Some(rest) = l.strip_prefix("param ") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() < 2 {
                return parse_err(n, "param line needs a name and a rank");
            }
            let rank: usize = toks[1].parse().map_err(|_| VieError::Parse { line: n, message: "bad rank".into() })?;
            if toks.len() != 2 + rank {
                return parse_err(n, format!("param line declares rank {rank} but lists {} dims", toks.len() - 2));
            }
            let dims = toks[2..]
                .iter()
                .map(|d| d.parse::<usize>().map_err(|_| VieError::Parse { line: n, message: format!("bad dim '{d}'") }))
                .collect::<Result<Vec<_>>>()?;
            pending = Some((toks[0].to_string(), n, dims, Vec::new()));
        } else if blocks.is_empty() {
            meta.push((n, l.to_string()));
        } else {
            return parse_err(n, format!("unexpected line '{l}' after parameters"));
        }
    }
    if let Some((name, line, dims, vals)) = pending.take() {
        let want: usize = dims.iter().product();
        if vals.len() != want {
            return parse_err(last_line, format!("block '{name}' (line {line}) ends after {} of {want} values", vals.len()));
        }
        blocks.push(Block { name, line, tensor: Tensor::new(dims, vals)? });
    }
    Ok(Document { meta, blocks, last_line })
}

/// Apply `config k=v` metadata lines to `config`.
pub(crate) fn apply_config_lines(config: &mut TrainConfig, lines: &[(usize, String)]) -> Result<()> {
    for (n, l) in lines {
        let kv = l.strip_prefix("config ").ok_or_else(|| VieError::Parse { line: *n, message: format!("unexpected line '{l}'") })?;
        let (k, v) = kv.split_once('=').ok_or_else(|| VieError::Parse { line: *n, message: "config line needs key=value".into() })?;
        config.set(k.trim(), v).map_err(|e| VieError::Parse { line: *n, message: e.to_string() })?;
    }
    Ok(())
}

pub fn from_text(text: &str) -> Result<TrainedModel> {
    let doc = parse_document(text, CHECKPOINT_HEADER)?;
    let variant = match doc.meta.first() {
        Some((n, l)) => match l.strip_prefix("variant ") {
            Some(v) => v.parse::<VariantSpec>().map_err(|e| VieError::Parse { line: *n, message: e.to_string() })?,
            None => return parse_err(*n, "expected a variant line"),
        },
        None => return parse_err(doc.last_line, "missing variant line"),
    };
    let mut config = TrainConfig::default();
    apply_config_lines(&mut config, &doc.meta[1..])?;
    assemble(variant, config, doc)
}

fn assemble(variant: VariantSpec, config: TrainConfig, mut doc: Document) -> Result<TrainedModel> {
    let last_line = doc.last_line;
    let mean = doc.take("standardizer.mean")?;
    let std = doc.take("standardizer.std")?;
    let penalties = doc.take("penalties")?;
    let history = doc.take("history")?;
    let validation = doc.take("validation")?;
    let classes = match doc.blocks.iter().find(|b| b.name == "decoder.weight") {
        Some(b) if b.tensor.rank() == 2 => b.tensor.cols(),
        Some(b) => return parse_err(b.line, "decoder.weight must be rank 2"),
        None => 2,
    };
    let d = mean.tensor.len();
    if std.tensor.len() != d || penalties.tensor.len() != 2 {
        return parse_err(std.line, "standardizer or penalty block has the wrong length");
    }
    if history.tensor.rank() != 2 || history.tensor.shape()[1] != 8 {
        return parse_err(history.line, "history must be rows × 8");
    }
    let mut model = TrainedModel::init(variant, config, d, classes, 0.5, 0)
        .map_err(|e| VieError::Parse { line: last_line, message: format!("cannot rebuild model: {e}") })?;
    model.standardizer.mean = mean.tensor.data().to_vec();
    model.standardizer.std = std.tensor.data().to_vec();
    model.beta = penalties.tensor.data()[0];
    model.lambda = penalties.tensor.data()[1];
    model.history = history.tensor.data().chunks(8).map(HistoryRow::from_values).collect::<Result<_>>()?;
    model.validation = validation.tensor.data().to_vec();

    let names = model_names(&model);
    let slots = model_tensors_mut(&mut model);
    for (name, slot) in names.iter().zip(slots) {
        let b = doc.take(name)?;
        if b.tensor.shape() != slot.shape() {
            return parse_err(b.line, format!("block '{name}' has shape {:?}, expected {:?}", b.tensor.shape(), slot.shape()));
        }
        *slot = b.tensor;
    }
    doc.finish()?;
    if !model.is_finite() {
        return parse_err(last_line, "checkpoint holds non-finite parameters");
    }
    Ok(model)
}

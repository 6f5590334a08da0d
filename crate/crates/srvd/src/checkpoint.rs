//! SRVD1 checkpoint container.
//!
//! A text header of `key = value` lines (network config, counters, optimizer
//! settings, RNG position) closed by `end`, then named sections. Each section
//! is a line `name dim [dim]` followed by the product of its dims as
//! little-endian f64.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use srvd_core::losses::{LossBreakdown, TermWeights};
use srvd_core::nets::{GroupId, ParamGroup};
use srvd_core::rng::RngState;
use srvd_core::trainer::{Adam, Moments, Phase};
use srvd_core::{NetConfig, ParameterSet, TrainState};

use crate::config::{apply_net_key, net_pairs};
use crate::error::{Error, IoContext, Result};

pub const MAGIC: &str = "SRVD1";
const HISTORY_COLS: usize = 9;

struct Writer {
    header: String,
    body: Vec<u8>,
}

impl Writer {
    fn kv(&mut self, k: &str, v: impl std::fmt::Display) {
        let _ = writeln!(self.header, "{k} = {v}");
    }

    fn section(&mut self, name: &str, dims: &[usize], data: impl IntoIterator<Item = f64>) {
        let dims: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
        self.body
            .extend_from_slice(format!("{name} {}\n", dims.join(" ")).as_bytes());
        for v in data {
            self.body.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serializes a training state, including its parameters.
pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut w = Writer {
        header: format!("{MAGIC}\n"),
        body: Vec::new(),
    };
    for (k, v) in net_pairs(state.params.config()) {
        w.kv(&format!("net.{k}"), v);
    }
    w.kv("state.phase", state.phase.name());
    w.kv("state.step", state.step);
    w.kv("state.phase_step", state.phase_step);
    w.kv("state.epoch", state.epoch);
    w.kv("state.cursor", state.cursor);
    w.kv("rng.seed", hex::encode(state.rng.seed));
    w.kv("rng.stream", state.rng.stream);
    w.kv("rng.word_pos", state.rng.word_pos);
    w.kv("adam.beta1", state.adam.beta1);
    w.kv("adam.beta2", state.adam.beta2);
    w.kv("adam.eps", state.adam.eps);
    for g in GroupId::ALL {
        w.kv(
            &format!("group.{}.trainable", g.name()),
            state.params.is_trainable(g),
        );
        if let Some(m) = state.adam.group(g) {
            w.kv(&format!("adam.{}.t", g.name()), m.t);
        }
    }
    w.header.push_str("end\n");

    for g in GroupId::ALL {
        let pg = state.params.group(g);
        w.section(
            &format!("group.{}.values", g.name()),
            &[pg.values.len()],
            pg.values.iter().copied(),
        );
        w.section(
            &format!("group.{}.buffers", g.name()),
            &[pg.buffers.len()],
            pg.buffers.iter().copied(),
        );
        if let Some(m) = state.adam.group(g) {
            w.section(
                &format!("adam.{}.m", g.name()),
                &[m.m.len()],
                m.m.iter().copied(),
            );
            w.section(
                &format!("adam.{}.v", g.name()),
                &[m.v.len()],
                m.v.iter().copied(),
            );
        }
        if let Some(e) = &state.ema[g.index()] {
            w.section(&format!("ema.{}", g.name()), &[e.len()], e.iter().copied());
        }
    }
    w.section(
        "order",
        &[state.order.len()],
        state.order.iter().map(|&i| i as f64),
    );
    let rows = state.history.iter().flat_map(|b| {
        let t = b.weights.as_array();
        [
            b.content,
            b.perceptual,
            b.adversarial_g,
            b.detection,
            b.total,
            t[0],
            t[1],
            t[2],
            t[3],
        ]
    });
    w.section("history", &[state.history.len(), HISTORY_COLS], rows);

    let mut out = w.header.into_bytes();
    out.extend(w.body);
    out
}

struct Parsed {
    header: BTreeMap<String, String>,
    sections: BTreeMap<String, Vec<f64>>,
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n')?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).ok()
}

fn parse(bytes: &[u8]) -> std::result::Result<Parsed, String> {
    let mut pos = 0;
    if take_line(bytes, &mut pos) != Some(MAGIC) {
        return Err(format!("missing {MAGIC} magic"));
    }
    let mut header = BTreeMap::new();
    loop {
        let line = take_line(bytes, &mut pos).ok_or("header is not terminated")?;
        if line == "end" {
            break;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| format!("bad header line {line:?}"))?;
        header.insert(k.to_string(), v.to_string());
    }
    let mut sections = BTreeMap::new();
    while pos < bytes.len() {
        let line = take_line(bytes, &mut pos).ok_or("truncated section header")?;
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or_default().to_string();
        let mut count = 1usize;
        for d in parts {
            count = count
                .checked_mul(
                    d.parse::<usize>()
                        .map_err(|_| format!("bad dims in {line:?}"))?,
                )
                .ok_or("section too large")?;
        }
        let len = count.checked_mul(8).ok_or("section too large")?;
        let data = bytes
            .get(pos..pos + len)
            .ok_or_else(|| format!("section {name} is truncated"))?;
        pos += len;
        let vals = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        sections.insert(name, vals);
    }
    Ok(Parsed { header, sections })
}

impl Parsed {
    fn get<T: std::str::FromStr>(&self, k: &str) -> std::result::Result<T, String> {
        let v = self
            .header
            .get(k)
            .ok_or_else(|| format!("missing header {k}"))?;
        v.parse().map_err(|_| format!("bad value for {k}: {v}"))
    }

    fn section(&mut self, k: &str) -> std::result::Result<Vec<f64>, String> {
        self.sections
            .remove(k)
            .ok_or_else(|| format!("missing section {k}"))
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<TrainState, String> {
    let mut p = parse(bytes)?;
    let mut net = NetConfig::desk();
    for (k, v) in &p.header {
        if let Some(key) = k.strip_prefix("net.") {
            apply_net_key(&mut net, key, v).map_err(|e| e.to_string())?;
        }
    }
    let mut groups = Vec::with_capacity(5);
    let mut adam = Adam::new(
        p.get("adam.beta1")?,
        p.get("adam.beta2")?,
        p.get("adam.eps")?,
    );
    let mut ema: [Option<Vec<f64>>; 5] = Default::default();
    for g in GroupId::ALL {
        let n = g.name();
        let values = p.section(&format!("group.{n}.values"))?;
        let buffers = p.section(&format!("group.{n}.buffers"))?;
        groups.push(ParamGroup::new(
            values,
            buffers,
            p.get(&format!("group.{n}.trainable"))?,
        ));
        if p.header.contains_key(&format!("adam.{n}.t")) {
            let m = Moments {
                m: p.section(&format!("adam.{n}.m"))?,
                v: p.section(&format!("adam.{n}.v"))?,
                t: p.get(&format!("adam.{n}.t"))?,
            };
            adam.moments[g.index()] = Some(m);
        }
        ema[g.index()] = p.sections.remove(&format!("ema.{n}"));
    }
    let groups: [ParamGroup; 5] = groups.try_into().map_err(|_| "five groups")?;
    let params = ParameterSet::from_groups(net, groups).map_err(|e| e.to_string())?;
    let seed_hex: String = p.get("rng.seed")?;
    let seed: [u8; 32] = hex::decode(&seed_hex)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or("bad rng seed")?;
    let rng = RngState {
        seed,
        stream: p.get("rng.stream")?,
        word_pos: p.get("rng.word_pos")?,
    };
    let phase_name: String = p.get("state.phase")?;
    let phase =
        Phase::from_name(&phase_name).ok_or_else(|| format!("unknown phase {phase_name}"))?;
    let order = p
        .section("order")?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let hist = p.section("history")?;
    if hist.len() % HISTORY_COLS != 0 {
        return Err("history has a partial row".into());
    }
    let history = hist
        .chunks_exact(HISTORY_COLS)
        .map(|r| LossBreakdown {
            content: r[0],
            perceptual: r[1],
            adversarial_g: r[2],
            detection: r[3],
            total: r[4],
            weights: TermWeights {
                content: r[5],
                perceptual: r[6],
                adversarial: r[7],
                detection: r[8],
            },
        })
        .collect();
    Ok(TrainState {
        phase,
        step: p.get("state.step")?,
        phase_step: p.get("state.phase_step")?,
        epoch: p.get("state.epoch")?,
        order,
        cursor: p.get("state.cursor")?,
        params,
        adam,
        rng,
        history,
        ema,
    })
}

pub fn decode_state(bytes: &[u8], path: &Path) -> Result<TrainState> {
    decode_inner(bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

pub fn save_state(path: &Path, state: &TrainState) -> Result<()> {
    std::fs::write(path, encode_state(state)).at(path)
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).at(path)?;
    decode_state(&bytes, path)
}

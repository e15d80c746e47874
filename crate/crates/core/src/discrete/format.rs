//! Line-oriented netlist text format.
//!
//! ```text
//! warp-netlist v1
//! seed <u64>
//! config <digest or ->
//! encoder <features> <bits_per_feature>
//! omega <row> <t_0> ... <t_{d-1}>          (one line per threshold row)
//! layers <count>
//! layer <index> <input_width> <nodes>
//! L<index> <n> <wire_1> ... <wire_n> <hex>  (one line per node)
//! groupsum <classes> <group_size> <tau>
//! end
//! ```
//!
//! Hex tables put address 0 at the least significant bit. Reals are written
//! in shortest round-trip form, so export of an imported file reproduces it
//! byte for byte.

use std::fmt::Write as _;

use thiserror::Error;

use super::{EncoderBlock, GroupSumBlock, NetLayer, Netlist, Node};
use crate::hadamard::{LutTable, MAX_ARITY};

pub const FORMAT_HEADER: &str = "warp-netlist v1";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

/// Writes the netlist in text form.
pub fn export_netlist(netlist: &Netlist, sink: &mut impl std::io::Write) -> std::io::Result<()> {
    sink.write_all(netlist.to_text().as_bytes())
}

/// Parses a netlist from text, validating structure as it goes.
pub fn import_netlist(source: &str) -> Result<Netlist, ParseError> {
    Parser::new(source).netlist()
}

impl Netlist {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let digest = if self.config_digest.is_empty() { "-" } else { &self.config_digest };
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "config {digest}").unwrap();
        let e = &self.encoder;
        writeln!(s, "encoder {} {}", e.features, e.bits_per_feature).unwrap();
        for i in 0..e.bits_per_feature {
            s.push_str("omega ");
            s.push_str(&i.to_string());
            for j in 0..e.features {
                s.push(' ');
                s.push_str(&fmt_real(e.omega[i * e.features + j]));
            }
            s.push('\n');
        }
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for (k, layer) in self.layers.iter().enumerate() {
            writeln!(s, "layer {k} {} {}", layer.input_width, layer.nodes.len()).unwrap();
            for node in &layer.nodes {
                write!(s, "L{k} {}", node.inputs.len()).unwrap();
                for w in &node.inputs {
                    write!(s, " {w}").unwrap();
                }
                writeln!(s, " {}", node.lut.to_hex()).unwrap();
            }
        }
        let g = &self.group_sum;
        writeln!(s, "groupsum {} {} {}", g.classes, g.group_size, fmt_real(g.tau)).unwrap();
        s.push_str("end\n");
        s
    }

    pub fn save(&self, path: &std::path::Path) -> crate::Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Netlist> {
        let text = std::fs::read_to_string(path)?;
        Ok(import_netlist(&text)?)
    }
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            lines: source.lines().collect(),
            pos: 0,
        }
    }

    fn err<T>(&self, line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line, msg: msg.into() })
    }

    /// Next non-empty line as (line number, tokens).
    fn next(&mut self, section: &str) -> Result<(usize, Vec<&'a str>), ParseError> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            self.pos += 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok((self.pos, toks));
            }
        }
        self.err(self.lines.len() + 1, format!("unexpected end of file in {section} section"))
    }

    /// A line `keyword v...` with exactly `arity` values after the keyword.
    fn keyed(&mut self, section: &str, keyword: &str, arity: usize) -> Result<(usize, Vec<&'a str>), ParseError> {
        let (ln, toks) = self.next(section)?;
        if toks[0] != keyword {
            return self.err(ln, format!("expected `{keyword}` in {section} section, found `{}`", toks[0]));
        }
        if toks.len() != arity + 1 {
            return self.err(ln, format!("`{keyword}` takes {arity} value(s), got {}", toks.len() - 1));
        }
        Ok((ln, toks[1..].to_vec()))
    }

    fn int<T: std::str::FromStr>(&self, ln: usize, tok: &str, what: &str) -> Result<T, ParseError> {
        tok.parse()
            .map_err(|_| ParseError { line: ln, msg: format!("{what}: `{tok}` is not a valid integer") })
    }

    fn real(&self, ln: usize, tok: &str, what: &str) -> Result<f64, ParseError> {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err(ln, format!("{what}: `{tok}` is not a finite number")),
        }
    }

    fn netlist(mut self) -> Result<Netlist, ParseError> {
        let (ln, toks) = self.next("header")?;
        let header = toks.join(" ");
        if header != FORMAT_HEADER {
            if toks.first() == Some(&"warp-netlist") {
                return self.err(ln, format!("unsupported version `{}`, expected v1", toks.get(1).unwrap_or(&"")));
            }
            return self.err(ln, format!("missing `{FORMAT_HEADER}` header"));
        }
        let (ln, v) = self.keyed("header", "seed", 1)?;
        let seed: u64 = self.int(ln, v[0], "seed")?;
        let (_, v) = self.keyed("header", "config", 1)?;
        let config_digest = if v[0] == "-" { String::new() } else { v[0].to_string() };

        let (ln, v) = self.keyed("encoder", "encoder", 2)?;
        let features: usize = self.int(ln, v[0], "feature count")?;
        let l: usize = self.int(ln, v[1], "bits per feature")?;
        if features == 0 || l == 0 {
            return self.err(ln, "encoder needs at least one feature and one bit per feature");
        }
        let mut omega = Vec::with_capacity(features * l);
        for i in 0..l {
            let (ln, v) = self.keyed("encoder", "omega", features + 1)?;
            let row: usize = self.int(ln, v[0], "threshold row")?;
            if row != i {
                return self.err(ln, format!("threshold row {row} out of order, expected {i}"));
            }
            for (j, tok) in v[1..].iter().enumerate() {
                let t = self.real(ln, tok, "threshold")?;
                if i > 0 && t < omega[(i - 1) * features + j] {
                    return self.err(ln, format!("threshold of feature {j} decreases at row {i}"));
                }
                omega.push(t);
            }
        }

        let (ln, v) = self.keyed("layers", "layers", 1)?;
        let count: usize = self.int(ln, v[0], "layer count")?;
        if count == 0 {
            return self.err(ln, "netlist needs at least one layer");
        }
        let mut width = features * l;
        let mut layers = Vec::with_capacity(count);
        for k in 0..count {
            let section = format!("layer {k}");
            let (ln, v) = self.keyed(&section, "layer", 3)?;
            let idx: usize = self.int(ln, v[0], "layer index")?;
            if idx != k {
                return self.err(ln, format!("layer {idx} out of order, expected {k}"));
            }
            let input_width: usize = self.int(ln, v[1], "input width")?;
            if input_width != width {
                return self.err(ln, format!("layer {k} input width {input_width} but previous width {width}"));
            }
            let n_nodes: usize = self.int(ln, v[2], "node count")?;
            if n_nodes == 0 {
                return self.err(ln, format!("layer {k} has no nodes"));
            }
            let tag = format!("L{k}");
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (ln, toks) = self.next(&section)?;
                if toks[0] != tag {
                    return self.err(ln, format!("expected node line `{tag} ...`, found `{}`", toks[0]));
                }
                let arity: usize = self.int(ln, toks.get(1).copied().unwrap_or(""), "node arity")?;
                if arity == 0 || arity > MAX_ARITY {
                    return self.err(ln, format!("node arity {arity} outside 1..={MAX_ARITY}"));
                }
                if toks.len() != arity + 3 {
                    return self.err(ln, format!("node of arity {arity} needs {arity} wires and a table, got {} fields", toks.len() - 2));
                }
                let mut inputs = Vec::with_capacity(arity);
                for tok in &toks[2..2 + arity] {
                    let w: u32 = self.int(ln, tok, "wire index")?;
                    if w as usize >= width {
                        return self.err(ln, format!("dangling wire {w}: previous layer has {width} outputs"));
                    }
                    inputs.push(w);
                }
                let hex = toks[2 + arity];
                let lut = LutTable::from_hex(arity, hex)
                    .map_err(|e| ParseError { line: ln, msg: format!("bad table `{hex}`: {e}") })?;
                nodes.push(Node { inputs, lut });
            }
            width = n_nodes;
            layers.push(NetLayer { input_width, nodes });
        }

        let (ln, v) = self.keyed("groupsum", "groupsum", 3)?;
        let classes: usize = self.int(ln, v[0], "class count")?;
        let group_size: usize = self.int(ln, v[1], "group size")?;
        let tau = self.real(ln, v[2], "GroupSum temperature")?;
        if classes == 0 || classes * group_size != width {
            return self.err(ln, format!("{classes} groups of {group_size} do not cover {width} outputs"));
        }
        let (ln, toks) = self.next("end")?;
        if toks != ["end"] {
            return self.err(ln, format!("expected `end`, found `{}`", toks.join(" ")));
        }
        if let Ok((ln, _)) = self.next("trailer") {
            return self.err(ln, "content after `end`");
        }
        Ok(Netlist {
            seed,
            config_digest,
            encoder: EncoderBlock { features, bits_per_feature: l, omega },
            layers,
            group_sum: GroupSumBlock { classes, group_size, tau },
        })
    }
}

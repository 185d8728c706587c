//! Plain-text instance files.
//!
//! ```text
//! CSBM v1 n=<n> p=<p> lambda=<f> mu=<f> d=<f> gamma=<f> seed=<u64> truth=<0|1>
//! EDGES <m>
//! <i> <j>            (m lines, 0-based, i < j)
//! B
//! <p decimals>       (n lines)
//! SIGMA <n entries>  (only when truth=1)
//! U <p decimals>     (only when truth=1)
//! ```
//!
//! Covariates are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{Instance, ModelParams, Truth};

/// Serializes an instance to the text format.
pub fn to_string(inst: &Instance) -> String {
    let m = &inst.params;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "CSBM v1 n={} p={} lambda={:?} mu={:?} d={:?} gamma={:?} seed={} truth={}",
        m.n(),
        m.p(),
        m.lambda(),
        m.mu(),
        m.d(),
        m.gamma(),
        inst.seed,
        u8::from(inst.truth.is_some())
    );
    let _ = writeln!(s, "EDGES {}", inst.graph.num_edges());
    for (i, j) in inst.graph.edges() {
        let _ = writeln!(s, "{i} {j}");
    }
    s.push_str("B\n");
    for i in 0..m.n() {
        for j in 0..m.p() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.16e}", inst.b[(i, j)]);
        }
        s.push('\n');
    }
    if let Some(t) = &inst.truth {
        s.push_str("SIGMA");
        for v in &t.sigma {
            let _ = write!(s, " {v}");
        }
        s.push_str("\nU");
        for v in &t.u {
            let _ = write!(s, " {v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(inst))?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    from_str(&text)
}

struct Lines<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next line with its 1-based number and starting byte offset.
    fn next(&mut self, expecting: &str) -> Result<(&'a str, usize, usize)> {
        if self.pos >= self.text.len() {
            return Err(Error::parse(
                self.line + 1,
                self.pos,
                format!("unexpected end of file, expected {expecting}"),
            ));
        }
        let rest = &self.text[self.pos..];
        let end = rest.find('\n').unwrap_or(rest.len());
        let line = rest[..end].trim_end_matches('\r');
        let start = self.pos;
        self.pos += (end + 1).min(rest.len());
        self.line += 1;
        Ok((line, self.line, start))
    }

    fn at_end(&self) -> bool {
        self.text[self.pos..].trim().is_empty()
    }
}

/// Whitespace-separated tokens with byte offsets relative to the file.
fn tokens(line: &str, start: usize) -> impl Iterator<Item = (&str, usize)> {
    line.split_ascii_whitespace()
        .map(move |t| (t, start + (t.as_ptr() as usize - line.as_ptr() as usize)))
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, off: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, off, format!("invalid {what}: {tok:?}")))
}

/// Parses the text format.
pub fn from_str(text: &str) -> Result<Instance> {
    let mut lines = Lines { text, pos: 0, line: 0 };
    let (hdr, ln, off) = lines.next("header")?;
    let mut toks = tokens(hdr, off);
    match (toks.next(), toks.next()) {
        (Some(("CSBM", _)), Some(("v1", _))) => {}
        _ => return Err(Error::parse(ln, off, "missing `CSBM v1` header")),
    }
    let mut n = None;
    let mut p = None;
    let mut lambda = None;
    let mut mu = None;
    let mut d = None;
    let mut gamma = None;
    let mut seed = None;
    let mut truth = None;
    for (tok, o) in toks {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(ln, o, format!("expected key=value, got {tok:?}")))?;
        let vo = o + key.len() + 1;
        match key {
            "n" => n = Some(parse_num::<usize>(val, ln, vo, "n")?),
            "p" => p = Some(parse_num::<usize>(val, ln, vo, "p")?),
            "lambda" => lambda = Some(parse_num::<f64>(val, ln, vo, "lambda")?),
            "mu" => mu = Some(parse_num::<f64>(val, ln, vo, "mu")?),
            "d" => d = Some(parse_num::<f64>(val, ln, vo, "d")?),
            "gamma" => gamma = Some(parse_num::<f64>(val, ln, vo, "gamma")?),
            "seed" => seed = Some(parse_num::<u64>(val, ln, vo, "seed")?),
            "truth" => {
                truth = Some(match val {
                    "0" => false,
                    "1" => true,
                    _ => return Err(Error::parse(ln, vo, "truth must be 0 or 1")),
                })
            }
            _ => return Err(Error::parse(ln, o, format!("unknown header key {key:?}"))),
        }
    }
    let missing = |k: &str| Error::parse(ln, off, format!("header is missing `{k}`"));
    let n = n.ok_or_else(|| missing("n"))?;
    let p = p.ok_or_else(|| missing("p"))?;
    let params = ModelParams::new(
        lambda.ok_or_else(|| missing("lambda"))?,
        mu.ok_or_else(|| missing("mu"))?,
        d.ok_or_else(|| missing("d"))?,
        n,
        p,
        gamma.ok_or_else(|| missing("gamma"))?,
    )?;
    let seed = seed.ok_or_else(|| missing("seed"))?;
    let has_truth = truth.ok_or_else(|| missing("truth"))?;

    let (line, ln, off) = lines.next("EDGES section")?;
    let m = match line.strip_prefix("EDGES ") {
        Some(rest) => parse_num::<usize>(rest.trim(), ln, off + 6, "edge count")?,
        None => return Err(Error::parse(ln, off, "expected `EDGES <m>`")),
    };
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, ln, off) = lines.next("edge line")?;
        let t: Vec<_> = tokens(line, off).collect();
        if t.len() != 2 {
            return Err(Error::parse(ln, off, "edge line must have two entries"));
        }
        let i: usize = parse_num(t[0].0, ln, t[0].1, "vertex")?;
        let j: usize = parse_num(t[1].0, ln, t[1].1, "vertex")?;
        if i >= j || j >= n {
            return Err(Error::parse(ln, off, format!("edge ({i}, {j}) must satisfy i < j < n")));
        }
        edges.push((i, j));
    }
    let graph = Graph::from_edges(n, &edges)?;
    if graph.num_edges() != m {
        return Err(Error::parse(ln, off, "duplicate edges"));
    }

    let (line, ln, off) = lines.next("B section")?;
    if line.trim() != "B" {
        return Err(Error::parse(ln, off, "expected `B`"));
    }
    let mut b = DMatrix::zeros(n, p);
    for i in 0..n {
        let (line, ln, off) = lines.next("B row")?;
        if line.starts_with("SIGMA") {
            return Err(Error::Dimension {
                what: "covariate rows",
                expected: n,
                found: i,
            });
        }
        let mut count = 0;
        for (j, (tok, o)) in tokens(line, off).enumerate() {
            if j < p {
                b[(i, j)] = parse_num(tok, ln, o, "covariate")?;
            }
            count += 1;
        }
        if count != p {
            return Err(Error::Dimension {
                what: "covariate row",
                expected: p,
                found: count,
            });
        }
    }

    let truth = if has_truth {
        let (line, ln, off) = lines.next("SIGMA line")?;
        let mut t = tokens(line, off);
        if t.next().map(|x| x.0) != Some("SIGMA") {
            return Err(Error::parse(ln, off, "expected `SIGMA`"));
        }
        let sigma = t
            .map(|(tok, o)| match tok {
                "1" => Ok(1i8),
                "-1" => Ok(-1i8),
                _ => Err(Error::parse(ln, o, format!("sigma entry must be -1 or 1, got {tok:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let (line, ln, off) = lines.next("U line")?;
        let mut t = tokens(line, off);
        if t.next().map(|x| x.0) != Some("U") {
            return Err(Error::parse(ln, off, "expected `U`"));
        }
        let u = t
            .map(|(tok, o)| parse_num::<f64>(tok, ln, o, "latent entry"))
            .collect::<Result<Vec<_>>>()?;
        Some(Truth { sigma, u })
    } else {
        None
    };
    if !lines.at_end() {
        let (_, ln, off) = lines.next("end of file")?;
        return Err(Error::parse(ln, off, "trailing content after instance"));
    }
    Instance::from_parts(params, graph, b, truth, seed)
}

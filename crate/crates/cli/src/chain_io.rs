//! Plain-text chain container.
//!
//! ```text
//! %%NcdChain v1
//! sizes 2 2
//! epsilon 0.1
//! provenance generated 7
//! rows
//! <n lines of n whitespace-separated entries>
//! ```
//!
//! `provenance` is `generated <seed>`, `manual`, or `assembled <seed> <k>`
//! followed by `k` lines of `path <file>` so paths may contain spaces. Entries are written in shortest round-trip form, so a chain
//! reads back bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ncd_core::{BlockPartition, DenseMatrix, NcdChain, Provenance};

use crate::error::{CliError, Result};

const MAGIC: &str = "%%NcdChain v1";

pub fn write_chain(chain: &NcdChain, mut w: impl Write) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    let sizes: Vec<String> = chain.partition().sizes().iter().map(usize::to_string).collect();
    writeln!(w, "sizes {}", sizes.join(" "))?;
    writeln!(w, "epsilon {}", chain.epsilon())?;
    match chain.provenance() {
        Provenance::Generated { seed } => writeln!(w, "provenance generated {seed}")?,
        Provenance::Assembled { paths, seed } => {
            writeln!(w, "provenance assembled {seed} {}", paths.len())?;
            for p in paths {
                writeln!(w, "path {p}")?;
            }
        }
        Provenance::Manual => writeln!(w, "provenance manual")?,
    }
    writeln!(w, "rows")?;
    let p = chain.p();
    for i in 0..p.rows() {
        let mut first = true;
        for v in p.row(i) {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_chain(chain: &NcdChain, path: impl AsRef<Path>) -> Result<()> {
    write_chain(chain, BufWriter::new(File::create(path)?))
}

pub fn read_chain(r: impl BufRead, origin: &Path) -> Result<NcdChain> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(CliError::parse(origin, 0, format!("unexpected end of file, expected {what}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(CliError::parse(origin, n, format!("expected {MAGIC:?}")));
    }

    let field = |n: usize, line: &str, key: &str| -> Result<Vec<String>> {
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(CliError::parse(origin, n, format!("expected {key:?} line")));
        }
        Ok(toks.map(str::to_string).collect())
    };

    let (n, line) = next("sizes")?;
    let sizes = field(n, &line, "sizes")?
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::parse(origin, n, format!("bad block size: {e}")))?;
    let partition = BlockPartition::new(sizes).map_err(|e| CliError::parse(origin, n, e.to_string()))?;

    let (n, line) = next("epsilon")?;
    let epsilon = match field(n, &line, "epsilon")?.as_slice() {
        [v] => v.parse::<f64>().map_err(|e| CliError::parse(origin, n, format!("bad epsilon: {e}")))?,
        _ => return Err(CliError::parse(origin, n, "epsilon takes one value")),
    };

    let (n, line) = next("provenance")?;
    let prov = field(n, &line, "provenance")?;
    let seed = |t: Option<&String>| -> Result<u64> {
        t.and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::parse(origin, n, "provenance needs an integer seed"))
    };
    let provenance = match prov.first().map(String::as_str) {
        Some("generated") if prov.len() == 2 => Provenance::Generated { seed: seed(prov.get(1))? },
        Some("assembled") if prov.len() == 3 => {
            let seed = seed(prov.get(1))?;
            let count: usize = prov[2]
                .parse()
                .map_err(|_| CliError::parse(origin, n, "assembled provenance needs a path count"))?;
            let mut paths = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, line) = next("path")?;
                match line.strip_prefix("path ") {
                    Some(p) => paths.push(p.to_string()),
                    None => return Err(CliError::parse(origin, n, "expected \"path\" line")),
                }
            }
            Provenance::Assembled { paths, seed }
        }
        Some("manual") if prov.len() == 1 => Provenance::Manual,
        _ => return Err(CliError::parse(origin, n, "unrecognized provenance")),
    };

    let (n, line) = next("rows")?;
    if line.trim() != "rows" {
        return Err(CliError::parse(origin, n, "expected \"rows\""));
    }
    let dim = partition.n();
    let mut data = Vec::with_capacity(dim * dim);
    for _ in 0..dim {
        let (n, line) = next("matrix row")?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| CliError::parse(origin, n, format!("bad entry {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(CliError::parse(
                origin,
                n,
                format!("row has {} entries, expected {dim}", data.len() - before),
            ));
        }
    }
    let p = DenseMatrix::from_vec(dim, dim, data);
    Ok(NcdChain::from_parts(p, partition, epsilon, provenance)?)
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<NcdChain> {
    let path = path.as_ref();
    read_chain(BufReader::new(File::open(path)?), path)
}

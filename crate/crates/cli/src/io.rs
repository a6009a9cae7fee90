//! Text and binary file formats read and written by the command line tool.
//!
//! Parse failures carry the line (or byte offset) where they happened and are
//! reported as usage errors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use tvtree::pwq::PwqFunc;
use tvtree::{ConvexWeights, PwlFunc, Tree, TruncatedWeights};

/// Formats a value with 12 significant digits, shortest form.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded:?}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = match tok {
        "inf" | "+inf" | "Inf" => f64::INFINITY,
        "-inf" | "-Inf" => f64::NEG_INFINITY,
        _ => tok.parse().map_err(|_| anyhow!("{}:{line}: '{tok}' is not a number", path.display()))?,
    };
    if v.is_nan() {
        bail!("{}:{line}: NaN is not allowed", path.display());
    }
    Ok(v)
}

/// Rows of a CSV file. A first line that does not parse as numbers is taken
/// to be a header and skipped.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (k, (line, l)) in data_lines(&text).enumerate() {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if k == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        rows.push(fields.iter().map(|f| parse_f64(f, path, line)).collect::<Result<Vec<_>>>()?);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        bail!("{}: rows have different numbers of columns", path.display());
    }
    Ok(rows)
}

pub fn csv_string(rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| num(v)).collect();
        writeln!(s, "{}", cells.join(",")).expect("writing to a string");
    }
    s
}

/// A single column of values.
pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    let rows = read_csv(path)?;
    if rows[0].len() != 1 {
        bail!("{}: expected one column, found {}", path.display(), rows[0].len());
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// 8-bit grayscale image with values scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    /// Rounds `255·v` half to even and clamps to the byte range.
    pub fn from_unit(rows: usize, cols: usize, values: &[f64]) -> Self {
        let pixels = values.iter().map(|v| (v * 255.0).round_ties_even().clamp(0.0, 255.0) as u8).collect();
        Self { rows, cols, pixels }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        bail!("byte {start}: unexpected end of header");
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0;
    let magic = pgm_token(bytes, &mut pos)?;
    if magic != "P5" {
        bail!("byte 0: expected P5 magic, found '{magic}'");
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let at = pos;
        let tok = pgm_token(bytes, &mut pos)?;
        *d = tok.parse().map_err(|_| anyhow!("byte {at}: '{tok}' is not a non-negative integer"))?;
    }
    let [cols, rows, maxval] = dims;
    if maxval != 255 {
        bail!("only maxval 255 is supported, found {maxval}");
    }
    if rows == 0 || cols == 0 {
        bail!("image has zero size");
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        bail!("byte {pos}: missing whitespace after header");
    }
    pos += 1;
    let need = rows * cols;
    if bytes.len() - pos != need {
        bail!("byte {pos}: expected {need} pixel bytes, found {}", bytes.len() - pos);
    }
    Ok(Pgm { rows, cols, pixels: bytes[pos..].to_vec() })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_pgm(&bytes).with_context(|| format!("{}: malformed PGM", path.display()))
}

/// Edge data of a tree file: `n`, then one line `child parent w⁻ w⁺ [C]`
/// per non-root node.
#[derive(Debug, Clone)]
pub struct TreeFile {
    pub tree: Tree,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cap: Vec<f64>,
}

impl TreeFile {
    pub fn convex(&self) -> Result<ConvexWeights> {
        ConvexWeights::new(self.lo.clone(), self.hi.clone()).map_err(|e| anyhow!("tree weights: {e}"))
    }

    /// Truncated weights `min(w|z|, C)` with `w = w⁺`; `w⁻` must equal `-w⁺`.
    pub fn truncated(&self) -> Result<TruncatedWeights> {
        for (i, (&l, &h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if l != -h {
                bail!("edge of node {i}: truncated weights need w⁻ = -w⁺");
            }
        }
        TruncatedWeights::new(self.hi.clone(), self.cap.clone()).map_err(|e| anyhow!("tree weights: {e}"))
    }
}

pub fn parse_tree(text: &str, path: &Path) -> Result<TreeFile> {
    let mut lines = data_lines(text);
    let (line, first) = lines.next().ok_or_else(|| anyhow!("{}: empty tree file", path.display()))?;
    let n: usize = first.parse().map_err(|_| anyhow!("{}:{line}: expected node count", path.display()))?;
    if n == 0 {
        bail!("{}:{line}: tree needs at least one node", path.display());
    }
    let mut parent = vec![None; n];
    let (mut lo, mut hi, mut cap) = (vec![0.0; n], vec![0.0; n], vec![f64::INFINITY; n]);
    let mut edges = 0;
    for (line, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 4 && tok.len() != 5 {
            bail!("{}:{line}: expected 'child parent w- w+ [C]'", path.display());
        }
        let idx = |t: &str| -> Result<usize> {
            let v: usize = t.parse().map_err(|_| anyhow!("{}:{line}: '{t}' is not a node index", path.display()))?;
            if v >= n {
                bail!("{}:{line}: node {v} out of range 0..{n}", path.display());
            }
            Ok(v)
        };
        let (c, p) = (idx(tok[0])?, idx(tok[1])?);
        if parent[c].is_some() {
            bail!("{}:{line}: node {c} already has a parent", path.display());
        }
        parent[c] = Some(p);
        lo[c] = parse_f64(tok[2], path, line)?;
        hi[c] = parse_f64(tok[3], path, line)?;
        if let Some(t) = tok.get(4) {
            cap[c] = parse_f64(t, path, line)?;
        }
        edges += 1;
    }
    if edges != n - 1 {
        bail!("{}: expected {} edge lines, found {edges}", path.display(), n - 1);
    }
    let tree = Tree::from_parents(parent).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(TreeFile { tree, lo, hi, cap })
}

pub fn tree_string(tree: &Tree, lo: &[f64], hi: &[f64], cap: &[f64]) -> String {
    let mut s = format!("{}\n", tree.len());
    for (c, p) in tree.edges() {
        write!(s, "{c} {p} {} {}", lo[c], hi[c]).expect("writing to a string");
        if cap[c].is_finite() {
            write!(s, " {}", cap[c]).expect("writing to a string");
        }
        s.push('\n');
    }
    s
}

pub fn read_tree(path: &Path) -> Result<TreeFile> {
    parse_tree(&read_text(path)?, path)
}

/// One unary per line: `t s0 λ1 s1 … λt st [anchorX anchorV]`.
pub fn parse_pwl_lines(text: &str, path: &Path) -> Result<Vec<PwlFunc>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let v: Vec<f64> = l.split_whitespace().map(|t| parse_f64(t, path, line)).collect::<Result<_>>()?;
        let t = count_prefix(&v, path, line)?;
        let body = &v[1..];
        let anchored = match body.len() {
            len if len == 2 * t + 1 => false,
            len if len == 2 * t + 3 => true,
            len => bail!("{}:{line}: {t} breakpoints need {} or {} numbers, found {len}", path.display(), 2 * t + 1, 2 * t + 3),
        };
        let slopes: Vec<f64> = (0..=t).map(|p| body[2 * p]).collect();
        let breaks: Vec<f64> = (0..t).map(|p| body[2 * p + 1]).collect();
        let mut f = PwlFunc::new(slopes, breaks).map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?;
        if anchored {
            f = f.with_anchor(body[2 * t + 1], body[2 * t + 2]);
        }
        out.push(f);
    }
    if out.is_empty() {
        bail!("{}: no unaries", path.display());
    }
    Ok(out)
}

/// One unary per line: `t a0 b0 λ1 a1 b1 … λt at bt [value_at_0]`, where the
/// derivative on piece `p` is `a_p·z + b_p`.
pub fn parse_pwq_lines(text: &str, path: &Path) -> Result<Vec<PwqFunc>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let v: Vec<f64> = l.split_whitespace().map(|t| parse_f64(t, path, line)).collect::<Result<_>>()?;
        let t = count_prefix(&v, path, line)?;
        let body = &v[1..];
        let offset = match body.len() {
            len if len == 3 * t + 2 => None,
            len if len == 3 * t + 3 => Some(body[3 * t + 2]),
            len => bail!("{}:{line}: {t} breakpoints need {} or {} numbers, found {len}", path.display(), 3 * t + 2, 3 * t + 3),
        };
        let a: Vec<f64> = (0..=t).map(|p| body[3 * p]).collect();
        let b: Vec<f64> = (0..=t).map(|p| body[3 * p + 1]).collect();
        let breaks: Vec<f64> = (0..t).map(|p| body[3 * p + 2]).collect();
        let mut f = PwqFunc::new(breaks, a, b).map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?;
        if let Some(o) = offset {
            f = f.with_offset(o);
        }
        out.push(f);
    }
    if out.is_empty() {
        bail!("{}: no unaries", path.display());
    }
    Ok(out)
}

fn count_prefix(v: &[f64], path: &Path, line: usize) -> Result<usize> {
    match v.first() {
        Some(&t) if t >= 0.0 && t.fract() == 0.0 => Ok(t as usize),
        _ => bail!("{}:{line}: line must start with the breakpoint count", path.display()),
    }
}

pub fn read_pwl_lines(path: &Path) -> Result<Vec<PwlFunc>> {
    parse_pwl_lines(&read_text(path)?, path)
}

pub fn read_pwq_lines(path: &Path) -> Result<Vec<PwqFunc>> {
    parse_pwq_lines(&read_text(path)?, path)
}

pub fn pwl_line(f: &PwlFunc) -> String {
    let mut s = f.num_breaks().to_string();
    for (p, sl) in f.slopes().iter().enumerate() {
        if p > 0 {
            write!(s, " {}", f.breaks()[p - 1]).expect("writing to a string");
        }
        write!(s, " {sl}").expect("writing to a string");
    }
    if let Some(a) = f.anchor() {
        write!(s, " {} {}", a.x, a.value).expect("writing to a string");
    }
    s
}

/// Unary volume: little-endian `u32` header `m n t`, then per pixel `t`
/// breakpoints, `t + 1` slopes and the value at the first breakpoint, all `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryVolume {
    pub rows: usize,
    pub cols: usize,
    pub unaries: Vec<PwlFunc>,
}

impl UnaryVolume {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let t = self.unaries.first().map_or(0, PwlFunc::num_breaks);
        if t == 0 || self.unaries.iter().any(|u| u.num_breaks() != t || u.anchor().is_none()) {
            bail!("volume unaries need the same positive breakpoint count and an anchor");
        }
        let mut out = Vec::with_capacity(12 + self.unaries.len() * (2 * t + 2) * 8);
        for h in [self.rows, self.cols, t] {
            out.extend_from_slice(&u32::try_from(h)?.to_le_bytes());
        }
        for u in &self.unaries {
            let vals = u.breaks().iter().chain(u.slopes()).copied().chain([u.eval(u.breaks()[0])]);
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }
}

pub fn parse_volume(bytes: &[u8]) -> Result<UnaryVolume> {
    if bytes.len() < 12 {
        bail!("byte 0: header needs 12 bytes, found {}", bytes.len());
    }
    let head = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols, t) = (head(0), head(1), head(2));
    if rows == 0 || cols == 0 || t == 0 {
        bail!("byte 0: dimensions must be positive, found {rows}×{cols}×{t}");
    }
    let per = 2 * t + 2;
    let need = 12 + rows * cols * per * 8;
    if bytes.len() != need {
        bail!("byte 12: expected {need} bytes in total, found {}", bytes.len());
    }
    let mut unaries = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        let base = 12 + k * per * 8;
        let v: Vec<f64> = (0..per)
            .map(|q| f64::from_le_bytes(bytes[base + 8 * q..base + 8 * q + 8].try_into().expect("8 bytes")))
            .collect();
        let f = PwlFunc::new(v[t..2 * t + 1].to_vec(), v[..t].to_vec())
            .map_err(|e| anyhow!("byte {base}: pixel {k}: {e}"))?
            .with_anchor(v[0], v[2 * t + 1]);
        unaries.push(f);
    }
    Ok(UnaryVolume { rows, cols, unaries })
}

pub fn read_volume(path: &Path) -> Result<UnaryVolume> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_volume(&bytes).with_context(|| format!("{}: malformed unary volume", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(2.0), "2.0");
        assert_eq!(num(-1234567.891234567), "-1234567.89123");
        assert_eq!(num(1e-9), "1e-9");
    }

    #[test]
    fn pgm_round_trip() {
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend([0, 17, 255, 128, 3, 9]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.rows, img.cols), (2, 3));
        assert_eq!(img.to_bytes(), bytes);
        let back = Pgm::from_unit(2, 3, &img.to_unit());
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_header_comments_and_errors() {
        let mut bytes = b"P5 # comment\n2 # w\n1\n255 ".to_vec();
        bytes.extend([1, 2]);
        assert_eq!(parse_pgm(&bytes).unwrap().pixels, vec![1, 2]);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn half_to_even_rounding() {
        // 0.5/255 and 1.5/255 sit exactly half way between bytes.
        let img = Pgm::from_unit(1, 4, &[0.5 / 255.0, 1.5 / 255.0, -0.2, 1.3]);
        assert_eq!(img.pixels, vec![0, 2, 0, 255]);
    }

    #[test]
    fn tree_file() {
        let p = Path::new("t.txt");
        let tf = parse_tree("3\n0 2 -1 1\n1 2 -0.5 2 4\n", p).unwrap();
        assert_eq!(tf.tree.root(), 2);
        assert_eq!(tf.hi, vec![1.0, 2.0, 0.0]);
        assert_eq!(tf.cap[1], 4.0);
        assert!(tf.truncated().is_err());
        let err = parse_tree("3\n0 2 -1 1\n0 1 -1 1\n", p).unwrap_err().to_string();
        assert!(err.contains("t.txt:3"), "{err}");
        assert!(parse_tree("2\n0 5 -1 1\n", p).is_err());
        let back = parse_tree(&tree_string(&tf.tree, &tf.lo, &tf.hi, &tf.cap), p).unwrap();
        assert_eq!((back.lo, back.hi, back.cap), (tf.lo, tf.hi, tf.cap));
    }

    #[test]
    fn unary_lines() {
        let p = Path::new("u.txt");
        let fs = parse_pwl_lines("1 -1 0.5 1 0.5 0\n# comment\n2 -1 0 0 1 1\n", p).unwrap();
        assert_eq!(fs[0].breaks(), &[0.5]);
        assert_eq!(fs[0].eval(2.0), 1.5);
        assert!(fs[1].anchor().is_none());
        assert_eq!(parse_pwl_lines(&format!("{}\n", pwl_line(&fs[0])), p).unwrap()[0], fs[0]);
        let err = parse_pwl_lines("2 -1 0 1\n", p).unwrap_err().to_string();
        assert!(err.contains("u.txt:1"), "{err}");

        let q = parse_pwq_lines("0 1 -2\n1 0 -1 0 0 1 3\n", p).unwrap();
        assert_eq!(q[0].eval(2.0), -2.0);
        assert_eq!(q[1].eval(-2.0), 5.0);
    }

    #[test]
    fn volume_round_trip() {
        let u = PwlFunc::interpolate(&[0.0, 1.0, 2.0], &[1.0, 0.0, 2.0], -3.0, 3.0).unwrap();
        let vol = UnaryVolume { rows: 1, cols: 2, unaries: vec![u.clone(), u.scale(2.0)] };
        let bytes = vol.to_bytes().unwrap();
        let back = parse_volume(&bytes).unwrap();
        assert_eq!(back.unaries.len(), 2);
        for (a, b) in back.unaries.iter().zip(&vol.unaries) {
            for x in [-1.0, 0.5, 1.5, 4.0] {
                assert_eq!(a.eval(x), b.eval(x));
            }
        }
        assert!(parse_volume(&bytes[..bytes.len() - 1]).is_err());
    }
}

//! Extended-XYZ reading and writing.
//!
//! Grammar, per frame:
//!
//! ```text
//! <atom count>                      unsigned integer, surrounding whitespace ignored
//! key=value key="quoted value" ...  property line; numeric values become targets
//! <Symbol> <x> <y> <z> [extra ...]  one line per atom, whitespace separated, Å
//! ```
//!
//! Blank lines between frames are skipped. Columns after `z` (forces, charges)
//! are ignored. Values that do not parse as floats are kept out of the target
//! map, except the requested target key, which must be numeric.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lkm_core::{elements, Molecule};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum XyzError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn err(line: usize, message: impl Into<String>) -> XyzError {
    XyzError::Parse {
        line,
        message: message.into(),
    }
}

/// Splits `key=value` pairs, honouring double-quoted values.
fn properties(line: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        if chars.next() != Some('=') {
            return Err(format!("expected key=value, found '{key}'"));
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(c) => value.push(c),
                    None => return Err(format!("unterminated quote in value of '{key}'")),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        if key.is_empty() {
            return Err("empty property key".into());
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Parses every frame of `text`; each frame must carry a numeric `target_key`.
pub fn parse_extended_xyz(text: &str, target_key: &str) -> Result<Vec<Molecule>, XyzError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut molecules = Vec::new();
    let mut i = 0;
    loop {
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        if i >= lines.len() {
            break;
        }
        let count_line = i + 1;
        let count: usize = lines[i].trim().parse().map_err(|_| {
            err(
                count_line,
                format!("expected atom count, found '{}'", lines[i].trim()),
            )
        })?;
        if count == 0 {
            return Err(err(count_line, "frame declares zero atoms"));
        }
        i += 1;
        let prop_line = i + 1;
        let Some(props) = lines.get(i) else {
            return Err(err(count_line, "missing property line"));
        };
        let props = properties(props).map_err(|m| err(prop_line, m))?;
        let mut targets = BTreeMap::new();
        let mut found_target = false;
        for (k, v) in props {
            if k == target_key {
                let value: f64 = v
                    .parse()
                    .map_err(|_| err(prop_line, format!("malformed float '{v}' for '{k}'")))?;
                if !value.is_finite() {
                    return Err(err(prop_line, format!("non-finite value for '{k}'")));
                }
                found_target = true;
                targets.insert(k, value);
            } else if let Ok(value) = v.parse::<f64>() {
                if value.is_finite() {
                    targets.insert(k, value);
                }
            }
        }
        if !found_target {
            return Err(err(prop_line, format!("missing target key '{target_key}'")));
        }
        i += 1;

        let mut z = Vec::with_capacity(count);
        let mut positions = Vec::with_capacity(count);
        for a in 0..count {
            let line_no = i + 1;
            let tokens: Vec<&str> = lines
                .get(i)
                .map_or(Vec::new(), |l| l.split_whitespace().collect());
            let looks_like_atom = tokens.len() >= 4 && tokens[0].parse::<f64>().is_err();
            if !looks_like_atom {
                // the frame ended early; report at its last line
                return Err(err(
                    i,
                    format!("atom-count mismatch: declared {count}, found {a}"),
                ));
            }
            let number = elements::atomic_number(tokens[0])
                .ok_or_else(|| err(line_no, format!("unknown element symbol '{}'", tokens[0])))?;
            let mut xyz = [0.0f64; 3];
            for (c, tok) in xyz.iter_mut().zip(&tokens[1..4]) {
                *c = tok
                    .parse()
                    .map_err(|_| err(line_no, format!("malformed float '{tok}'")))?;
                if !c.is_finite() {
                    return Err(err(line_no, format!("non-finite coordinate '{tok}'")));
                }
            }
            z.push(number);
            positions.push(xyz);
            i += 1;
        }
        let molecule = Molecule::new(z, positions, targets)
            .map_err(|e| err(count_line, format!("invalid frame: {e}")))?;
        molecules.push(molecule);
    }
    Ok(molecules)
}

/// Writes frames that [`parse_extended_xyz`] reads back exactly. Targets are
/// emitted in key order; floats use the shortest round-tripping representation.
pub fn write_extended_xyz(molecules: &[Molecule]) -> Result<String, XyzError> {
    let mut out = String::new();
    for (k, m) in molecules.iter().enumerate() {
        writeln!(out, "{}", m.n_atoms()).unwrap();
        let props: Vec<String> = m
            .targets()
            .iter()
            .map(|(key, v)| format!("{key}={v:?}"))
            .collect();
        writeln!(out, "{}", props.join(" ")).unwrap();
        for (z, p) in m.atomic_numbers().iter().zip(m.positions()) {
            let sym = elements::symbol(*z)
                .ok_or_else(|| err(k + 1, format!("molecule {k}: no symbol for Z={z}")))?;
            writeln!(out, "{sym} {:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
        }
    }
    Ok(out)
}

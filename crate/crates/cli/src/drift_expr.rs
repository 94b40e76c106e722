//! Drift expressions over the built-in registry.
//!
//! ```text
//! sum    := term ('+' term)*
//! term   := number '*' factor | factor
//! factor := '(' sum ')' | name ['(' args ')']
//! args   := list (',' list)*      list := number (';' number)*
//! ```
//!
//! `mollified(<sum>, <level>)` is the one call taking an expression argument.
//! The grammar is the one used by `Display` on [`Drift`], so printed drifts
//! parse back to the same value.

use roughflow::flow::{Drift, MAX_DIM};

pub struct RegistryEntry {
    pub name: &'static str,
    pub signature: &'static str,
    pub doc: &'static str,
}

pub const REGISTRY: &[RegistryEntry] = &[
    RegistryEntry { name: "zero", signature: "zero", doc: "b = 0" },
    RegistryEntry { name: "constant", signature: "constant(c1;...;cd)", doc: "constant vector field" },
    RegistryEntry { name: "linear", signature: "linear(a11;a12;...;add)", doc: "b(x) = A x, A row-major" },
    RegistryEntry { name: "sign", signature: "sign", doc: "componentwise sign, sign(0) = 0" },
    RegistryEntry { name: "indicator", signature: "indicator(lo,hi)", doc: "componentwise indicator of [lo, hi]" },
    RegistryEntry {
        name: "bump",
        signature: "bump(amp,c1;...;cd,width)",
        doc: "amp * exp(-|x - c|^2 / (2 width^2)) in every component; one centre value is broadcast",
    },
    RegistryEntry {
        name: "checkerboard",
        signature: "checkerboard(cell,period)",
        doc: "d = 2 only: (-1)^(floor(x1/cell) + floor(x2/cell)) along e1, then e2, alternating each half period",
    },
    RegistryEntry { name: "mollified", signature: "mollified(expr,level)", doc: "convolution with the bump mollifier at scale 2^-level" },
];

/// Parses `src` into a drift on `R^dim`.
pub fn parse_drift(src: &str, dim: usize) -> Result<Drift, String> {
    if dim == 0 || dim > MAX_DIM {
        return Err(format!("dimension {dim} outside 1..={MAX_DIM}"));
    }
    let mut p = Parser { s: src.as_bytes(), pos: 0, dim };
    let d = p.sum()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(d)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> String {
        format!("{msg} at column {}", self.pos + 1)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Drift, String> {
        let mut parts = vec![self.term()?];
        while self.eat(b'+') {
            parts.push(self.term()?);
        }
        if parts.len() == 1 {
            Ok(parts.pop().unwrap())
        } else {
            Drift::sum(parts).map_err(|e| e.to_string())
        }
    }

    fn term(&mut self) -> Result<Drift, String> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'.' => {
                let k = self.number()?;
                self.expect(b'*')?;
                Ok(Drift::scaled(k, self.factor()?))
            }
            _ => self.factor(),
        }
    }

    fn factor(&mut self) -> Result<Drift, String> {
        if self.eat(b'(') {
            let d = self.sum()?;
            self.expect(b')')?;
            return Ok(d);
        }
        let name = self.ident()?;
        if name == "mollified" {
            self.expect(b'(')?;
            let base = self.sum()?;
            self.expect(b',')?;
            let level = self.number()?;
            self.expect(b')')?;
            if !(level >= 0.0 && level.fract() == 0.0 && level <= 30.0) {
                return Err(format!("mollification level {level} must be an integer in 0..=30"));
            }
            return base.mollified(level as u32).map_err(|e| e.to_string());
        }
        let args = if self.eat(b'(') {
            let mut args = Vec::new();
            if !self.eat(b')') {
                loop {
                    args.push(self.list()?);
                    if self.eat(b')') {
                        break;
                    }
                    self.expect(b',')?;
                }
            }
            args
        } else {
            Vec::new()
        };
        self.build(&name, args)
    }

    fn build(&self, name: &str, args: Vec<Vec<f64>>) -> Result<Drift, String> {
        let d = self.dim;
        let arity = |n: usize| -> Result<(), String> {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("{name} takes {n} argument(s), got {}", args.len()))
            }
        };
        let scalar = |i: usize| -> Result<f64, String> {
            match args[i].as_slice() {
                [v] => Ok(*v),
                _ => Err(format!("argument {} of {name} must be a single number", i + 1)),
            }
        };
        let r = match name {
            "zero" => {
                arity(0)?;
                Ok(Drift::zero(d))
            }
            "sign" => {
                arity(0)?;
                Ok(Drift::sign(d))
            }
            "constant" => {
                arity(1)?;
                let c = broadcast(&args[0], d, name)?;
                Ok(Drift::constant(c))
            }
            "linear" => {
                arity(1)?;
                Drift::linear(d, args[0].clone())
            }
            "indicator" => {
                arity(2)?;
                Drift::indicator(d, scalar(0)?, scalar(1)?)
            }
            "bump" => {
                arity(3)?;
                let c = broadcast(&args[1], d, name)?;
                Drift::bump(scalar(0)?, c, scalar(2)?)
            }
            "checkerboard" => {
                arity(2)?;
                if d != 2 {
                    return Err(format!("checkerboard needs dimension 2, got {d}"));
                }
                Drift::checkerboard(scalar(0)?, scalar(1)?)
            }
            _ => {
                let known: Vec<&str> = REGISTRY.iter().map(|e| e.name).collect();
                return Err(format!("unknown drift '{name}' (known: {})", known.join(", ")));
            }
        };
        r.map_err(|e| e.to_string())
    }

    fn ident(&mut self) -> Result<String, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a drift name"));
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<f64, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
            // a '+' only continues a number right after an exponent marker
            if self.s[self.pos] == b'+' && !matches!(self.s.get(self.pos.wrapping_sub(1)), Some(b'e' | b'E')) {
                break;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("invalid number '{text}' at column {}", start + 1))
    }

    fn list(&mut self) -> Result<Vec<f64>, String> {
        let mut v = vec![self.number()?];
        while self.eat(b';') {
            v.push(self.number()?);
        }
        Ok(v)
    }
}

fn broadcast(v: &[f64], d: usize, name: &str) -> Result<Vec<f64>, String> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(format!("{name} needs 1 or {d} values, got {n}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use roughflow::flow::DriftField;

    #[test]
    fn registry_items_parse() {
        assert_eq!(parse_drift("sign", 1).unwrap(), Drift::sign(1));
        assert_eq!(parse_drift("zero()", 2).unwrap(), Drift::zero(2));
        assert_eq!(parse_drift("indicator(0, 1)", 1).unwrap(), Drift::indicator(1, 0.0, 1.0).unwrap());
        assert_eq!(parse_drift("bump(1,0.3,0.4)", 2).unwrap(), Drift::bump(1.0, vec![0.3, 0.3], 0.4).unwrap());
        assert_eq!(parse_drift("linear(1;0;0;-1)", 2).unwrap(), Drift::linear(2, vec![1.0, 0.0, 0.0, -1.0]).unwrap());
        assert!(parse_drift("checkerboard(0.5, 1)", 2).is_ok());
    }

    #[test]
    fn sums_scales_and_mollification() {
        let d = parse_drift("sign + 0.5*bump(1, 0, 0.3)", 1).unwrap();
        assert_eq!(d.sup_norm(), 1.5);
        let m = parse_drift("mollified(sign, 6)", 1).unwrap();
        assert_eq!(m, Drift::sign(1).mollified(6).unwrap());
        let s = parse_drift("2*(sign + indicator(-1,1))", 1).unwrap();
        assert_eq!(s.sup_norm(), 4.0);
    }

    #[test]
    fn display_round_trips() {
        for src in ["sign + 0.5*bump(1,0.25;-1,0.3)", "mollified(2*(sign() + indicator(0,1)), 4)", "constant(1e-3;2)"] {
            let d = parse_drift(src, 2).unwrap();
            assert_eq!(parse_drift(&d.to_string(), 2).unwrap(), d, "{src}");
        }
    }

    #[test]
    fn errors_are_reported() {
        assert!(parse_drift("sgn", 1).unwrap_err().contains("unknown drift"));
        assert!(parse_drift("checkerboard(1,1)", 1).unwrap_err().contains("dimension 2"));
        assert!(parse_drift("bump(1,0)", 1).unwrap_err().contains("3 argument"));
        assert!(parse_drift("sign +", 1).is_err());
        assert!(parse_drift("sign sign", 1).unwrap_err().contains("trailing"));
        assert!(parse_drift("mollified(sign, 2.5)", 1).is_err());
    }
}

//! Text model file: a settings header, the token list in id order, then one
//! section per order with `k-gram<TAB>count<TAB>continuation` lines sorted by
//! token sequence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{pack, KnModel, LmConfig, LmError, NgramCounts};

const HEADER: &str = "\\kn-lm";
const END: &str = "\\end";

impl KnModel {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "order\t{}", c.order);
        let _ = writeln!(out, "discount\t{}", c.discount);
        let _ = writeln!(out, "boundaries\t{}", u8::from(c.boundaries));
        let _ = writeln!(out, "unk\t{}", u8::from(c.include_unk));
        let _ = writeln!(out, "\\tokens\t{}", self.tokens.len());
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        for k in 1..=c.order {
            let grams = self.ngrams(k);
            let _ = writeln!(out, "\\{k}-grams\t{}", grams.len());
            for (words, n) in grams {
                let _ = writeln!(out, "{}\t{}\t{}", words.join(" "), n.count, n.continuation);
            }
        }
        let _ = writeln!(out, "{END}");
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<KnModel, LmError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| LmError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };

        let (n, l) = next("header")?;
        if l != HEADER {
            return Err(err(n, format!("expected {HEADER:?}")));
        }
        let setting = |(n, l): (usize, &str), key: &str| -> Result<(usize, String), LmError> {
            match l.split_once('\t') {
                Some((k, v)) if k == key => Ok((n, v.to_string())),
                _ => Err(err(n, format!("expected `{key}<TAB>value`"))),
            }
        };
        let num =
            |(n, v): (usize, String)| v.parse::<u64>().map_err(|e| err(n, format!("{v:?}: {e}")));
        let order = num(setting(next("order")?, "order")?)? as usize;
        let (dn, dv) = setting(next("discount")?, "discount")?;
        let discount = dv
            .parse::<f64>()
            .map_err(|e| err(dn, format!("{dv:?}: {e}")))?;
        let boundaries = num(setting(next("boundaries")?, "boundaries")?)? != 0;
        let include_unk = num(setting(next("unk")?, "unk")?)? != 0;
        let config = LmConfig {
            order,
            discount,
            boundaries,
            include_unk,
        };
        config.validate().map_err(|e| err(2, e.to_string()))?;

        let mut model = KnModel::empty(config);
        let count = num(setting(next("\\tokens")?, "\\tokens")?)?;
        for _ in 0..count {
            let (n, tok) = next("token")?;
            if tok.is_empty() || model.ids.contains_key(tok) {
                return Err(err(n, format!("empty or duplicate token {tok:?}")));
            }
            model.intern(tok)?;
        }
        let mut stored = Vec::with_capacity(order);
        for k in 1..=order {
            let count = num({
                let key = format!("\\{k}-grams");
                setting(next(&key)?, &key)?
            })?;
            let mut rows = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let (n, l) = next("n-gram")?;
                let fields: Vec<&str> = l.split('\t').collect();
                let [gram, c, cont] = fields[..] else {
                    return Err(err(
                        n,
                        "expected `k-gram<TAB>count<TAB>continuation`".into(),
                    ));
                };
                let ids = gram
                    .split(' ')
                    .map(|w| {
                        model
                            .ids
                            .get(w)
                            .copied()
                            .ok_or_else(|| err(n, format!("unknown token {w:?}")))
                    })
                    .collect::<Result<Vec<u32>, _>>()?;
                if ids.len() != k {
                    return Err(err(n, format!("expected a {k}-gram")));
                }
                let counts = NgramCounts {
                    count: c.parse().map_err(|e| err(n, format!("{c:?}: {e}")))?,
                    continuation: cont.parse().map_err(|e| err(n, format!("{cont:?}: {e}")))?,
                };
                if counts.count == 0 {
                    return Err(err(n, "counts must be ≥ 1".into()));
                }
                if model.tables[k - 1].insert(pack(&ids), counts).is_some() {
                    return Err(err(n, format!("duplicate {k}-gram")));
                }
                rows.push((n, ids, counts));
            }
            stored.push(rows);
        }
        let (n, l) = next(END)?;
        if l != END {
            return Err(err(n, format!("expected {END:?}")));
        }
        if let Some((n, _)) = lines.next() {
            return Err(err(n, "trailing content".into()));
        }
        model.finalize();
        for (k, rows) in stored.iter().enumerate() {
            for (n, ids, counts) in rows {
                if model.tables[k][&pack(ids)] != *counts {
                    return Err(err(
                        *n,
                        "continuation count disagrees with higher-order table".into(),
                    ));
                }
            }
        }
        Ok(model)
    }
}

pub fn save_model(model: &KnModel, path: &Path) -> Result<(), LmError> {
    let io = |source| LmError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    std::fs::write(&tmp, model.to_text()).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_model(path: &Path) -> Result<KnModel, LmError> {
    let text = std::fs::read_to_string(path).map_err(|source| LmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    KnModel::from_text(&text, path)
}

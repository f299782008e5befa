//! Experiment runner: config parsing, stage orchestration and persistence.
//!
//! Config grammar, one statement per line:
//!
//! ```text
//! # comment            (also `;`; a comment may follow a value after whitespace)
//! [section]
//! key = value          (numbers, true/false, words, or comma lists of numbers)
//! ```
//!
//! Defaults:
//!
//! | section      | key              | default              |
//! |--------------|------------------|----------------------|
//! | `datum`      | `family`         | `LK_NEG_SINGLE_MAX`  |
//! | `datum`      | `amplitude`      | `1`                  |
//! | `datum`      | `u0_cos` ...     | empty (`family = explicit` only) |
//! | `model`      | `lambda`         | required             |
//! | `model`      | `kappa`          | required             |
//! | `model`      | `p`              | `2`                  |
//! | `grid`       | `char_panels`    | `32`                 |
//! | `grid`       | `char_depth`     | `30`                 |
//! | `grid`       | `periodic_n`     | `512`                |
//! | `grid`       | `threepoint_nodes` | `257`              |
//! | `eta`        | `max_frac`       | `0.999`              |
//! | `eta`        | `frames`         | `40`                 |
//! | `eta`        | `global_max`     | `10`                 |
//! | `eta`        | `gap_first`      | `1`                  |
//! | `eta`        | `gap_last`       | `12`                 |
//! | `eta`        | `gap_per_decade` | `10`                 |
//! | `eta`        | `residual_dt`    | `1e-4`               |
//! | `lemmas`     | `b`              | `0.25, 0.5, 0.75, 1, 1.5` |
//! | `lemmas`     | `depth`          | `1`                  |
//! | `lemmas`     | `gap_first`      | `2`                  |
//! | `lemmas`     | `gap_last`       | `12`                 |
//! | `lemmas`     | `per_decade`     | `4`                  |
//! | `crosscheck` | `t_frac`         | `0.5`                |
//! | `crosscheck` | `samples`        | `5`                  |
//! | `crosscheck` | `global_t_end`   | `1`                  |
//! | `crosscheck` | `step_fraction`  | `1`                  |
//! | `threepoint` | `lambda`, `kappa`| `1`, `1`             |
//! | `threepoint` | `mirror_lambda`, `mirror_kappa` | `-2`, `-1` |
//! | `threepoint` | `t_max`          | `2`                  |
//! | `threepoint` | `mirror`         | `true`               |
//! | `stages`     | `classify` ... `threepoint` | `true`    |
//! | `output`     | `dir`            | `ghslab-out`         |
//! | `run`        | `seed`           | `0`                  |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{self, LocalModel};
use crate::charsolve::{ode_residual_check, CharGrid, CharSolver};
use crate::error::{Error, Result};
use crate::initdata::{
    classify, make_benchmark_datum, parse_coeffs, BenchmarkCase, BlowupTime, InitialDatum,
    ModelParams, TrigSeries,
};
use crate::norms::{self, FitTarget, Verdict};
use crate::output::{atomic_write, fmt_f64, sha256_hex, CsvTable, DirLock};
use crate::pdecheck::{self, ThreePointSolver};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "GHSLAB_THREADS";
/// Frame invariants (mass, rho identity, mean, clock round trip).
pub const INVARIANT_TOL: f64 = 1e-8;
/// Relative L^2 agreement between the two periodic solvers.
pub const CROSSCHECK_TOL: f64 = 1e-5;
/// ODE residual on characteristics.
pub const RESIDUAL_TOL: f64 = 1e-5;
/// |u(0, t)| the three-point run must exceed before terminating.
pub const THREEPOINT_U0_MIN: f64 = 1e3;

/// One problem found in a config file; line and column are 1-based, 0 when
/// the issue is not tied to a position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}:{}: {}", self.line, self.column, self.message)
        }
    }
}

fn issues_to_error(issues: &[ConfigIssue]) -> Error {
    let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
    Error::Config(lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum DatumSpec {
    Family { case: BenchmarkCase, amplitude: f64 },
    Explicit {
        u0_cos: Vec<f64>,
        u0_sin: Vec<f64>,
        rho_cos: Vec<f64>,
        rho_sin: Vec<f64>,
    },
}

impl DatumSpec {
    pub fn build(&self) -> Result<InitialDatum> {
        match self {
            DatumSpec::Family { case, amplitude } => make_benchmark_datum(*case, *amplitude),
            DatumSpec::Explicit {
                u0_cos,
                u0_sin,
                rho_cos,
                rho_sin,
            } => InitialDatum::new(
                TrigSeries::new(u0_cos.clone(), u0_sin.clone())?,
                TrigSeries::new(rho_cos.clone(), rho_sin.clone())?,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Classify,
    Solve,
    Norms,
    Rates,
    Lemmas,
    Crosscheck,
    Threepoint,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Classify,
        Stage::Solve,
        Stage::Norms,
        Stage::Rates,
        Stage::Lemmas,
        Stage::Crosscheck,
        Stage::Threepoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Solve => "solve",
            Stage::Norms => "norms",
            Stage::Rates => "rates",
            Stage::Lemmas => "lemmas",
            Stage::Crosscheck => "crosscheck",
            Stage::Threepoint => "threepoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub datum: DatumSpec,
    pub lambda: f64,
    pub kappa: f64,
    pub p_list: Vec<f64>,
    pub char_panels: usize,
    pub char_depth: usize,
    pub periodic_n: usize,
    pub threepoint_nodes: usize,
    pub eta_max_frac: f64,
    pub frames: usize,
    pub global_eta_max: f64,
    pub gap_first: f64,
    pub gap_last: f64,
    pub gap_per_decade: usize,
    pub residual_dt: f64,
    pub lemma_b: Vec<f64>,
    pub lemma_depth: f64,
    pub lemma_gap_first: f64,
    pub lemma_gap_last: f64,
    pub lemma_per_decade: usize,
    pub crosscheck_t_frac: f64,
    pub crosscheck_samples: usize,
    pub crosscheck_global_t_end: f64,
    pub crosscheck_step_fraction: f64,
    pub threepoint_lambda: f64,
    pub threepoint_kappa: f64,
    pub mirror_lambda: f64,
    pub mirror_kappa: f64,
    pub threepoint_t_max: f64,
    pub threepoint_mirror: bool,
    pub stages: Vec<Stage>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("datum", &["family", "amplitude", "u0_cos", "u0_sin", "rho_cos", "rho_sin"]),
    ("model", &["lambda", "kappa", "p"]),
    ("grid", &["char_panels", "char_depth", "periodic_n", "threepoint_nodes"]),
    (
        "eta",
        &["max_frac", "frames", "global_max", "gap_first", "gap_last", "gap_per_decade", "residual_dt"],
    ),
    ("lemmas", &["b", "depth", "gap_first", "gap_last", "per_decade"]),
    ("crosscheck", &["t_frac", "samples", "global_t_end", "step_fraction"]),
    (
        "threepoint",
        &["lambda", "kappa", "mirror_lambda", "mirror_kappa", "t_max", "mirror"],
    ),
    (
        "stages",
        &["classify", "solve", "norms", "rates", "lemmas", "crosscheck", "threepoint"],
    ),
    ("output", &["dir"]),
    ("run", &["seed"]),
];

fn nearest<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= 3.max(c.len() / 2))
        .min()
        .map(|(_, c)| c)
}

/// Raw value with the position of its first character.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    column: usize,
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b'#' || b == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn lex(text: &str, issues: &mut Vec<ConfigIssue>) -> BTreeMap<(String, String), Entry> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let body = strip_comment(raw);
        let lead = body.len() - body.trim_start().len();
        let t = body.trim();
        if t.is_empty() {
            continue;
        }
        let col = raw[..lead].chars().count() + 1;
        if let Some(rest) = t.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                issues.push(ConfigIssue {
                    line: line_no,
                    column: col,
                    message: "section header is missing ']'".into(),
                });
                section = None;
                continue;
            };
            let name = name.trim();
            if SECTIONS.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                let hint = nearest(name, SECTIONS.iter().map(|(s, _)| *s))
                    .map(|s| format!("; did you mean [{s}]?"))
                    .unwrap_or_default();
                issues.push(ConfigIssue {
                    line: line_no,
                    column: col + 1,
                    message: format!("unknown section [{name}]{hint}"),
                });
                section = None;
            }
            continue;
        }
        let Some(eq) = t.find('=') else {
            issues.push(ConfigIssue {
                line: line_no,
                column: col,
                message: "expected `key = value` or `[section]`".into(),
            });
            continue;
        };
        let key = t[..eq].trim();
        let value = t[eq + 1..].trim();
        let value_col = col
            + t[..eq + 1].chars().count()
            + (t[eq + 1..].len() - t[eq + 1..].trim_start().len());
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            issues.push(ConfigIssue {
                line: line_no,
                column: col,
                message: format!("invalid key {key:?}"),
            });
            continue;
        }
        let Some(sec) = &section else {
            issues.push(ConfigIssue {
                line: line_no,
                column: col,
                message: format!("key `{key}` appears outside a known section"),
            });
            continue;
        };
        let keys = SECTIONS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            let hint = nearest(key, keys.iter().copied())
                .map(|k| format!("; did you mean `{k}`?"))
                .unwrap_or_default();
            issues.push(ConfigIssue {
                line: line_no,
                column: col,
                message: format!("unknown key `{key}` in [{sec}]{hint}"),
            });
            continue;
        }
        if value.is_empty() && !key.ends_with("_cos") && !key.ends_with("_sin") {
            issues.push(ConfigIssue {
                line: line_no,
                column: value_col,
                message: format!("`{key}` has no value"),
            });
            continue;
        }
        let k = (sec.clone(), key.to_string());
        if let Some(prev) = out.get(&k) {
            let prev: &Entry = prev;
            issues.push(ConfigIssue {
                line: line_no,
                column: col,
                message: format!("duplicate key `{key}` in [{sec}] (first set on line {})", prev.line),
            });
            continue;
        }
        out.insert(
            k,
            Entry {
                value: value.to_string(),
                line: line_no,
                column: value_col,
            },
        );
    }
    out
}

struct Reader<'a> {
    entries: &'a BTreeMap<(String, String), Entry>,
    issues: &'a mut Vec<ConfigIssue>,
}

impl Reader<'_> {
    fn get(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(sec.to_string(), key.to_string()))
    }

    fn bad(&mut self, e: &Entry, msg: String) {
        self.issues.push(ConfigIssue {
            line: e.line,
            column: e.column,
            message: msg,
        });
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        let Some(e) = self.get(sec, key).cloned() else {
            return default;
        };
        match e.value.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                self.bad(&e, format!("`{key}` must be a finite number, got {:?}", e.value));
                default
            }
        }
    }

    fn required_f64(&mut self, sec: &str, key: &str) -> f64 {
        if self.get(sec, key).is_none() {
            self.issues.push(ConfigIssue {
                line: 0,
                column: 0,
                message: format!("missing required key `{key}` in [{sec}]"),
            });
            return f64::NAN;
        }
        self.f64_or(sec, key, f64::NAN)
    }

    fn usize_or(&mut self, sec: &str, key: &str, default: usize) -> usize {
        let Some(e) = self.get(sec, key).cloned() else {
            return default;
        };
        e.value.parse::<usize>().unwrap_or_else(|_| {
            self.bad(&e, format!("`{key}` must be a non-negative integer, got {:?}", e.value));
            default
        })
    }

    fn u64_or(&mut self, sec: &str, key: &str, default: u64) -> u64 {
        let Some(e) = self.get(sec, key).cloned() else {
            return default;
        };
        e.value.parse::<u64>().unwrap_or_else(|_| {
            self.bad(&e, format!("`{key}` must be a non-negative integer, got {:?}", e.value));
            default
        })
    }

    fn bool_or(&mut self, sec: &str, key: &str, default: bool) -> bool {
        let Some(e) = self.get(sec, key).cloned() else {
            return default;
        };
        match e.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => true,
            "false" | "no" | "off" | "0" => false,
            _ => {
                self.bad(&e, format!("`{key}` must be true or false, got {:?}", e.value));
                default
            }
        }
    }

    fn list_or(&mut self, sec: &str, key: &str, default: &[f64]) -> Vec<f64> {
        let Some(e) = self.get(sec, key).cloned() else {
            return default.to_vec();
        };
        parse_coeffs(&e.value).unwrap_or_else(|err| {
            let msg = match err {
                Error::Config(m) => m,
                other => other.to_string(),
            };
            self.bad(&e, format!("`{key}`: {msg}"));
            default.to_vec()
        })
    }
}

/// Parse and validate config text; every problem found is reported.
pub fn parse_config_str(text: &str) -> std::result::Result<ExperimentConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let entries = lex(text, &mut issues);
    let mut r = Reader {
        entries: &entries,
        issues: &mut issues,
    };

    let coeff_keys = ["u0_cos", "u0_sin", "rho_cos", "rho_sin"];
    let family_entry = r.get("datum", "family").cloned();
    let family = family_entry
        .as_ref()
        .map(|e| e.value.clone())
        .unwrap_or_else(|| "LK_NEG_SINGLE_MAX".into());
    let amplitude = r.f64_or("datum", "amplitude", 1.0);
    let datum = if family.eq_ignore_ascii_case("explicit") {
        let [a, b, c, d] = coeff_keys.map(|k| r.list_or("datum", k, &[]));
        if a.len() + b.len() < 2 {
            r.issues.push(ConfigIssue {
                line: family_entry.as_ref().map_or(0, |e| e.line),
                column: family_entry.as_ref().map_or(0, |e| e.column),
                message: "explicit datum needs u0_cos or u0_sin with a nonconstant mode".into(),
            });
        }
        DatumSpec::Explicit {
            u0_cos: a,
            u0_sin: b,
            rho_cos: c,
            rho_sin: d,
        }
    } else {
        for k in coeff_keys {
            if let Some(e) = r.get("datum", k).cloned() {
                r.bad(&e, format!("`{k}` is only used with family = explicit"));
            }
        }
        let case = family.parse::<BenchmarkCase>().unwrap_or_else(|_| {
            let names = BenchmarkCase::ALL.map(|c| c.name());
            let hint = nearest(&family.to_ascii_uppercase(), names.iter().copied())
                .map(|n| format!("; did you mean {n}?"))
                .unwrap_or_default();
            let e = family_entry.clone().expect("default family is valid");
            r.bad(&e, format!("unknown datum family {family:?}{hint}"));
            BenchmarkCase::LkNegSingleMax
        });
        if !(amplitude > 0.0) {
            let e = r.get("datum", "amplitude").cloned().expect("default amplitude is valid");
            r.bad(&e, format!("amplitude must be positive, got {amplitude}"));
        }
        DatumSpec::Family { case, amplitude }
    };

    let lambda = r.required_f64("model", "lambda");
    if lambda == 0.0 {
        let e = r.get("model", "lambda").cloned().expect("present");
        r.bad(&e, "lambda must be nonzero (lambda != 0)".into());
    }
    let kappa = r.required_f64("model", "kappa");
    let p_list = r.list_or("model", "p", &[2.0]);
    if p_list.is_empty() || p_list.iter().any(|&p| p < 1.0) {
        let e = r.get("model", "p").cloned().expect("default p is valid");
        r.bad(&e, "every p must satisfy p >= 1 and the list must be nonempty".into());
    }

    let char_panels = r.usize_or("grid", "char_panels", crate::charsolve::BASE_PANELS);
    let char_depth = r.usize_or("grid", "char_depth", crate::charsolve::REFINE_DEPTH);
    let periodic_n = r.usize_or("grid", "periodic_n", 512);
    let threepoint_nodes = r.usize_or("grid", "threepoint_nodes", pdecheck::THREEPOINT_NODES);

    let eta_max_frac = r.f64_or("eta", "max_frac", 0.999);
    let frames = r.usize_or("eta", "frames", 40);
    let global_eta_max = r.f64_or("eta", "global_max", 10.0);
    let gap_first = r.f64_or("eta", "gap_first", 1.0);
    let gap_last = r.f64_or("eta", "gap_last", 12.0);
    let gap_per_decade = r.usize_or("eta", "gap_per_decade", 10);
    let residual_dt = r.f64_or("eta", "residual_dt", 1e-4);

    let lemma_b = r.list_or("lemmas", "b", &[0.25, 0.5, 0.75, 1.0, 1.5]);
    let lemma_depth = r.f64_or("lemmas", "depth", 1.0);
    let lemma_gap_first = r.f64_or("lemmas", "gap_first", 2.0);
    let lemma_gap_last = r.f64_or("lemmas", "gap_last", 12.0);
    let lemma_per_decade = r.usize_or("lemmas", "per_decade", 4);

    let crosscheck_t_frac = r.f64_or("crosscheck", "t_frac", 0.5);
    let crosscheck_samples = r.usize_or("crosscheck", "samples", 5);
    let crosscheck_global_t_end = r.f64_or("crosscheck", "global_t_end", 1.0);
    let crosscheck_step_fraction = r.f64_or("crosscheck", "step_fraction", 1.0);

    let threepoint_lambda = r.f64_or("threepoint", "lambda", 1.0);
    let threepoint_kappa = r.f64_or("threepoint", "kappa", 1.0);
    let mirror_lambda = r.f64_or("threepoint", "mirror_lambda", -2.0);
    let mirror_kappa = r.f64_or("threepoint", "mirror_kappa", -1.0);
    let threepoint_t_max = r.f64_or("threepoint", "t_max", 2.0);
    let threepoint_mirror = r.bool_or("threepoint", "mirror", true);

    let stages: Vec<Stage> = Stage::ALL
        .into_iter()
        .filter(|s| r.bool_or("stages", s.name(), true))
        .collect();
    let out_dir = PathBuf::from(
        r.get("output", "dir").map(|e| e.value.clone()).unwrap_or_else(|| "ghslab-out".into()),
    );
    let seed = r.u64_or("run", "seed", 0);

    // range checks; each names the rule it enforces
    let mut rule = |ok: bool, sec: &str, key: &str, msg: &str| {
        if !ok {
            let (line, column) = r.get(sec, key).map_or((0, 0), |e| (e.line, e.column));
            r.issues.push(ConfigIssue {
                line,
                column,
                message: format!("[{sec}] {key}: {msg}"),
            });
        }
    };
    rule(char_panels >= 4, "grid", "char_panels", "must be at least 4");
    rule(char_depth <= 60, "grid", "char_depth", "must be at most 60");
    rule(
        periodic_n >= 16 && periodic_n % 2 == 0,
        "grid",
        "periodic_n",
        "must be even and at least 16",
    );
    rule(threepoint_nodes >= 9, "grid", "threepoint_nodes", "must be at least 9");
    rule(
        eta_max_frac > 0.0 && eta_max_frac < 1.0,
        "eta",
        "max_frac",
        "must lie in (0, 1)",
    );
    rule(frames >= 2, "eta", "frames", "must be at least 2");
    rule(global_eta_max > 0.0, "eta", "global_max", "must be positive");
    rule(gap_first >= 0.0, "eta", "gap_first", "must be non-negative");
    rule(gap_last > gap_first, "eta", "gap_last", "must exceed gap_first");
    rule(gap_last <= 15.0, "eta", "gap_last", "must be at most 15 decades");
    rule(gap_per_decade >= 1, "eta", "gap_per_decade", "must be at least 1");
    rule(residual_dt > 0.0 && residual_dt < 0.1, "eta", "residual_dt", "must lie in (0, 0.1)");
    rule(
        !lemma_b.is_empty() && lemma_b.iter().all(|&b| b > 0.0),
        "lemmas",
        "b",
        "entries must be positive",
    );
    rule(lemma_depth > 0.0, "lemmas", "depth", "must be positive");
    rule(lemma_gap_first >= 1.0, "lemmas", "gap_first", "must be at least 1");
    rule(
        lemma_gap_last > lemma_gap_first && lemma_gap_last <= 15.0,
        "lemmas",
        "gap_last",
        "must exceed gap_first and be at most 15",
    );
    rule(lemma_per_decade >= 1, "lemmas", "per_decade", "must be at least 1");
    rule(
        crosscheck_t_frac > 0.0 && crosscheck_t_frac < 1.0,
        "crosscheck",
        "t_frac",
        "must lie in (0, 1)",
    );
    rule(crosscheck_samples >= 1, "crosscheck", "samples", "must be at least 1");
    rule(crosscheck_global_t_end > 0.0, "crosscheck", "global_t_end", "must be positive");
    rule(
        crosscheck_step_fraction > 0.0 && crosscheck_step_fraction <= 1.0,
        "crosscheck",
        "step_fraction",
        "must lie in (0, 1]",
    );
    rule(threepoint_lambda != 0.0, "threepoint", "lambda", "must be nonzero");
    rule(mirror_lambda != 0.0, "threepoint", "mirror_lambda", "must be nonzero");
    rule(threepoint_t_max > 0.0, "threepoint", "t_max", "must be positive");

    if !issues.is_empty() {
        issues.sort_by_key(|i| (i.line == 0, i.line, i.column));
        return Err(issues);
    }
    Ok(ExperimentConfig {
        datum,
        lambda,
        kappa,
        p_list,
        char_panels,
        char_depth,
        periodic_n,
        threepoint_nodes,
        eta_max_frac,
        frames,
        global_eta_max,
        gap_first,
        gap_last,
        gap_per_decade,
        residual_dt,
        lemma_b,
        lemma_depth,
        lemma_gap_first,
        lemma_gap_last,
        lemma_per_decade,
        crosscheck_t_frac,
        crosscheck_samples,
        crosscheck_global_t_end,
        crosscheck_step_fraction,
        threepoint_lambda,
        threepoint_kappa,
        mirror_lambda,
        mirror_kappa,
        threepoint_t_max,
        threepoint_mirror,
        stages,
        out_dir,
        seed,
    })
}

/// Read and parse a config file.
pub fn parse_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Config(format!("{} is not UTF-8: {e}", path.display())))?;
    let cfg = parse_config_str(&text).map_err(|i| issues_to_error(&i))?;
    Ok((cfg, text))
}

// ---------------------------------------------------------------------------
// running

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StageStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "error")]
    Failed,
    #[serde(rename = "skipped")]
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RollUp {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub verdict: Option<RollUp>,
    pub seconds: f64,
    pub error: Option<String>,
    pub summary: Value,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputFile>,
    pub max_error_estimate: f64,
    pub verdict: RollUp,
    pub wall_seconds: f64,
}

impl RunManifest {
    /// 0 ok, 3 numerical failure, 4 verdict FAIL.
    pub fn exit_code(&self) -> i32 {
        if self.stages.iter().any(|s| s.status == StageStatus::Failed) {
            3
        } else if self.verdict == RollUp::Fail {
            4
        } else {
            0
        }
    }
}

/// Orchestrates the stages and owns the output directory for the run.
pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    quiet: bool,
    written: Vec<OutputFile>,
    max_err: f64,
}

struct StageOutcome {
    verdict: Option<RollUp>,
    summary: Value,
    files: Vec<String>,
}

fn pass_if(ok: bool) -> Option<RollUp> {
    Some(if ok { RollUp::Pass } else { RollUp::Fail })
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, quiet: bool) -> Self {
        Self {
            cfg,
            out: cfg.out_dir.clone(),
            quiet,
            written: Vec::new(),
            max_err: 0.0,
        }
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        atomic_write(&self.out.join(name), bytes)?;
        self.written.retain(|f| f.path != name);
        self.written.push(OutputFile {
            path: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(name.to_string())
    }

    fn params(&self, p: f64) -> Result<ModelParams> {
        ModelParams::new(self.cfg.lambda, self.cfg.kappa, p)
    }

    fn solver(&self, p: f64) -> Result<CharSolver> {
        let datum = self.cfg.datum.build()?;
        let params = self.params(p)?;
        let profile = crate::initdata::classify_static(&datum, &params)?;
        let grid = CharGrid::with_depth(
            &profile.eta_star_location(),
            self.cfg.char_panels,
            self.cfg.char_depth,
        );
        let mut s = CharSolver::with_grid(&datum, &params, profile, grid)?;
        s.set_global_eta_max(self.cfg.global_eta_max);
        Ok(s)
    }

    /// Run the requested stages and write the manifest.
    pub fn run(&mut self, stages: &[Stage], config_text: &str) -> Result<RunManifest> {
        let start = Instant::now();
        let _lock = DirLock::acquire(&self.out)?;
        let mut records = Vec::new();
        for &stage in stages {
            self.note(&format!("[{}] running", stage.name()));
            let t0 = Instant::now();
            let res = match stage {
                Stage::Classify => self.classify_stage(),
                Stage::Solve => self.solve_stage(),
                Stage::Norms => self.norms_stage(),
                Stage::Rates => self.rates_stage(),
                Stage::Lemmas => self.lemmas_stage(),
                Stage::Crosscheck => self.crosscheck_stage(),
                Stage::Threepoint => self.threepoint_stage(),
            };
            let seconds = t0.elapsed().as_secs_f64();
            let rec = match res {
                Ok(Some(o)) => StageRecord {
                    stage,
                    status: StageStatus::Ok,
                    verdict: o.verdict,
                    seconds,
                    error: None,
                    summary: o.summary,
                    outputs: o.files,
                },
                Ok(None) => StageRecord {
                    stage,
                    status: StageStatus::Skipped,
                    verdict: None,
                    seconds,
                    error: None,
                    summary: json!({"reason": "not applicable to this datum"}),
                    outputs: vec![],
                },
                Err(e) => StageRecord {
                    stage,
                    status: StageStatus::Failed,
                    verdict: None,
                    seconds,
                    error: Some(e.to_string()),
                    summary: Value::Null,
                    outputs: vec![],
                },
            };
            self.note(&format!(
                "[{}] {:?} {} ({seconds:.2} s)",
                stage.name(),
                rec.status,
                rec.verdict.map_or("-", |v| if v == RollUp::Pass { "PASS" } else { "FAIL" })
            ));
            records.push(rec);
        }
        let verdict = if records
            .iter()
            .any(|r| r.verdict == Some(RollUp::Fail) || r.status == StageStatus::Failed)
        {
            RollUp::Fail
        } else {
            RollUp::Pass
        };
        let mut outputs = self.written.clone();
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed: self.cfg.seed,
            threads: rayon::current_num_threads(),
            stages: records,
            outputs,
            max_error_estimate: self.max_err,
            verdict,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Io(format!("manifest serialization: {e}")))?;
        atomic_write(&self.out.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }

    fn classify_stage(&mut self) -> Result<Option<StageOutcome>> {
        let datum = self.cfg.datum.build()?;
        let mut rows = Vec::new();
        for &p in &self.cfg.p_list {
            let params = self.params(p)?;
            let profile = classify(&datum, &params)?;
            let table = asymptotics::estimate_table(&params, &profile);
            rows.push(json!({"p": p, "profile": profile, "estimates": table}));
        }
        let text = serde_json::to_string_pretty(&rows)
            .map_err(|e| Error::Io(e.to_string()))?;
        let f = self.write("classify.json", text.as_bytes())?;
        let first = &rows[0]["profile"];
        Ok(Some(StageOutcome {
            verdict: None,
            summary: json!({
                "sign_case": first["sign_case"],
                "eta_star": first["eta_star"],
                "t_star": first["t_star"],
            }),
            files: vec![f],
        }))
    }

    fn eta_frames(&self, solver: &CharSolver) -> Vec<f64> {
        let n = self.cfg.frames;
        let top = match solver.eta_star() {
            Some(es) => self.cfg.eta_max_frac * es,
            None => self.cfg.global_eta_max,
        };
        (0..n).map(|k| top * k as f64 / (n - 1) as f64).collect()
    }

    fn solve_stage(&mut self) -> Result<Option<StageOutcome>> {
        let solver = self.solver(self.cfg.p_list[0])?;
        let lam = solver.params.lambda;
        let clock = solver.clock()?;
        let mut t = CsvTable::new(&[
            "eta",
            "t",
            "p0bar",
            "mass_err",
            "ux_mean",
            "rho_identity_err",
            "clock_roundtrip_err",
            "min_q",
        ]);
        let mut worst = 0.0f64;
        let mut last = None;
        for eta in self.eta_frames(&solver) {
            let f = solver.frame_at(eta)?;
            let mass_err = (f.mass() - 1.0).abs();
            let rho_err = (0..f.x.len())
                .map(|i| {
                    let want = f.rho0[i] * f.gamma_x[i].powf(2.0 * lam);
                    (f.rho_on_char[i] - want).abs() / want.abs().max(1.0)
                })
                .fold(0.0, f64::max);
            let back = clock.stage_at_time(&solver, f.t)?.eta;
            let rt_err = (back - eta).abs() / eta.abs().max(1.0);
            let min_q = f.q.iter().copied().fold(f64::INFINITY, f64::min);
            worst = worst.max(mass_err).max(f.ux_mean().abs()).max(rho_err).max(rt_err);
            self.max_err = self.max_err.max(f.p0bar_err / f.p0bar);
            t.push_f64(&[eta, f.t, f.p0bar, mass_err, f.ux_mean(), rho_err, rt_err, min_q]);
            last = Some(f);
        }
        let mut files = vec![self.write("frames.csv", t.render().as_bytes())?];
        let last = last.expect("at least two frames");
        files.push(self.write("frame_last.csv", last.to_csv().as_bytes())?);

        // residual of the second-order ODE on characteristics at two interior times
        let dt = self.cfg.residual_dt;
        let horizon = match clock.t_star {
            Some(BlowupTime::Finite(ts)) => ts,
            _ => clock.t_of_eta(&solver, self.cfg.global_eta_max)?,
        };
        let mut res = Vec::new();
        for frac in [0.25, 0.5] {
            let tt = frac * horizon;
            res.push((tt, ode_residual_check(&solver, tt, dt)?));
        }
        let max_res = res.iter().map(|r| r.1).fold(0.0, f64::max);
        let ok = worst <= INVARIANT_TOL && max_res <= RESIDUAL_TOL;
        Ok(Some(StageOutcome {
            verdict: pass_if(ok),
            summary: json!({
                "frames": self.cfg.frames,
                "worst_invariant_error": worst,
                "invariant_tolerance": INVARIANT_TOL,
                "ode_residual": res.iter().map(|(t, r)| json!({"t": t, "residual": r})).collect::<Vec<_>>(),
                "residual_tolerance": RESIDUAL_TOL,
                "t_star": clock.t_star,
            }),
            files,
        }))
    }

    fn norm_stages(&self, solver: &CharSolver) -> Result<Vec<crate::charsolve::Stage>> {
        match solver.eta_star() {
            Some(_) => norms::gap_mesh(
                solver,
                self.cfg.gap_first,
                self.cfg.gap_last,
                self.cfg.gap_per_decade,
            ),
            None => Ok(self
                .eta_frames(solver)
                .into_iter()
                .map(|e| solver.stage_from_eta(e))
                .collect()),
        }
    }

    fn norms_stage(&mut self) -> Result<Option<StageOutcome>> {
        let mut files = Vec::new();
        let mut worst = 0.0f64;
        let mut growth = Vec::new();
        for &p in &self.cfg.p_list.clone() {
            let solver = self.solver(p)?;
            let stages = self.norm_stages(&solver)?;
            let series = norms::track(&solver, &stages)?;
            worst = worst.max(series.sandwich_violation());
            self.max_err = series.err_est.iter().copied().fold(self.max_err, f64::max);
            files.push(self.write(&format!("norms_p{}.csv", fmt_p(p)), series.to_csv().as_bytes())?);
            let n = series.len();
            growth.push(json!({
                "p": p,
                "ux_first": series.ux_norm[0],
                "ux_last": series.ux_norm[n - 1],
                "rho_last": series.rho_norm[n - 1],
            }));
        }
        Ok(Some(StageOutcome {
            verdict: pass_if(worst <= INVARIANT_TOL),
            summary: json!({"sandwich_violation": worst, "series": growth}),
            files,
        }))
    }

    fn rates_stage(&mut self) -> Result<Option<StageOutcome>> {
        let probe = self.solver(self.cfg.p_list[0])?;
        if probe.eta_star().is_none() {
            return Ok(None);
        }
        let mut t = CsvTable::new(&[
            "p",
            "target",
            "fitted_exponent",
            "stderr",
            "r2",
            "predicted",
            "predicted_diverges",
            "final_growth",
            "verdict",
            "faster_than_predicted",
        ]);
        let mut fits = Vec::new();
        let mut any_mismatch = false;
        for &p in &self.cfg.p_list.clone() {
            let solver = self.solver(p)?;
            let stages = norms::gap_mesh(
                &solver,
                self.cfg.gap_first,
                self.cfg.gap_last,
                self.cfg.gap_per_decade,
            )?;
            let series = norms::track(&solver, &stages)?;
            let mut targets = vec![FitTarget::Ux, FitTarget::UxLower];
            if !solver.profile.rho_identically_zero {
                targets.push(FitTarget::RhoPow);
            }
            for target in targets {
                match norms::fit_rate(&series, &solver.profile, &solver.params, target) {
                    Ok(fit) => {
                        if fit.verdict == Verdict::Mismatch && target != FitTarget::UxLower {
                            any_mismatch = true;
                        }
                        let predicted = match fit.predicted {
                            Some(crate::initdata::Exponent::Power(e)) => fmt_f64(e),
                            Some(crate::initdata::Exponent::Log) => "log".into(),
                            None => "none".into(),
                        };
                        t.push_cells(vec![
                            fmt_f64(p),
                            format!("{target:?}"),
                            fmt_f64(fit.fitted_exponent),
                            fmt_f64(fit.stderr),
                            fmt_f64(fit.r2),
                            predicted,
                            fit.predicted_diverges.map_or("none".into(), |d| d.to_string()),
                            fmt_f64(fit.final_growth),
                            fit.verdict.to_string(),
                            fit.faster_than_predicted.to_string(),
                        ]);
                        fits.push(json!({"p": p, "fit": fit}));
                    }
                    Err(Error::UnsupportedCase(why)) => {
                        fits.push(json!({"p": p, "target": target, "skipped": why}));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let f = self.write("rates.csv", t.render().as_bytes())?;
        Ok(Some(StageOutcome {
            verdict: pass_if(!any_mismatch),
            summary: json!({"fits": fits}),
            files: vec![f],
        }))
    }

    fn lemmas_stage(&mut self) -> Result<Option<StageOutcome>> {
        let gaps = asymptotics::gap_sequence(
            self.cfg.lemma_gap_first,
            self.cfg.lemma_gap_last,
            self.cfg.lemma_per_decade,
        );
        let v = self.cfg.lemma_depth;
        let mut checks = Vec::new();
        for &b in &self.cfg.lemma_b {
            for (sign, tag) in [(-1.0, "min"), (1.0, "max")] {
                let model = LocalModel::cosine_well(sign * v, sign, b)?;
                checks.push(asymptotics::verify_lemma(&model, &gaps, &format!("{tag}_b{}", fmt_p(b)))?);
            }
        }
        let f = self.write("lemmas.csv", asymptotics::report_csv(&checks).as_bytes())?;
        let ok = checks.iter().all(|c| c.pass);
        Ok(Some(StageOutcome {
            verdict: pass_if(ok),
            summary: json!({
                "checks": checks.iter().map(|c| json!({
                    "case": c.case_id,
                    "regime": c.regime,
                    "terminal_ratio": c.terminal_ratio,
                    "fitted_exponent": c.fitted_exponent,
                    "pass": c.pass,
                })).collect::<Vec<_>>()
            }),
            files: vec![f],
        }))
    }

    fn crosscheck_stage(&mut self) -> Result<Option<StageOutcome>> {
        let solver = self.solver(self.cfg.p_list[0])?;
        let t_end = match solver.clock()?.t_star {
            Some(BlowupTime::Finite(ts)) => self.cfg.crosscheck_t_frac * ts,
            _ => self.cfg.crosscheck_global_t_end,
        };
        let k = self.cfg.crosscheck_samples;
        let times: Vec<f64> = (1..=k).map(|i| t_end * i as f64 / k as f64).collect();
        let rows = pdecheck::crosscheck(
            &solver,
            self.cfg.periodic_n,
            &times,
            self.cfg.crosscheck_step_fraction,
        )?;
        let f = self.write("crosscheck.csv", pdecheck::crosscheck_csv(&rows).as_bytes())?;
        let worst = rows
            .iter()
            .map(|r| r.ux_rel_l2.max(r.rho_rel_l2))
            .fold(0.0, f64::max);
        Ok(Some(StageOutcome {
            verdict: pass_if(worst <= CROSSCHECK_TOL),
            summary: json!({"t_end": t_end, "max_rel_l2": worst, "tolerance": CROSSCHECK_TOL}),
            files: vec![f],
        }))
    }

    fn threepoint_stage(&mut self) -> Result<Option<StageOutcome>> {
        let run = |lam: f64, kap: f64, sign: f64| -> Result<(pdecheck::Trajectory, pdecheck::RiccatiReport)> {
            let params = ModelParams::new(lam, kap, 2.0)?;
            let s = ThreePointSolver::new(params, self.cfg.threepoint_nodes)?;
            let init = pdecheck::threepoint_benchmark(&s, sign)?;
            let tr = pdecheck::run_threepoint(&s, init, self.cfg.threepoint_t_max)?;
            let rep = pdecheck::riccati_monitor(&tr)?;
            Ok((tr, rep))
        };
        let (tr, rep) = run(self.cfg.threepoint_lambda, self.cfg.threepoint_kappa, 1.0)?;
        let mut files = vec![self.write("threepoint.csv", tr.to_csv().as_bytes())?];
        let ok = rep.holds && rep.t_obs <= rep.bound_t && rep.final_abs_u0 > THREEPOINT_U0_MIN;
        let mut summary = json!({"main": rep, "u0_threshold": THREEPOINT_U0_MIN});
        if self.cfg.threepoint_mirror {
            // informational: reported, never part of the verdict
            match run(self.cfg.mirror_lambda, self.cfg.mirror_kappa, -1.0) {
                Ok((mtr, mrep)) => {
                    files.push(self.write("threepoint_mirror.csv", mtr.to_csv().as_bytes())?);
                    summary["mirror"] = json!(mrep);
                }
                Err(e) => summary["mirror"] = json!({"error": e.to_string()}),
            }
        }
        Ok(Some(StageOutcome {
            verdict: pass_if(ok),
            summary,
            files,
        }))
    }
}

/// p as a file-name fragment: 2 -> "2", 1.5 -> "1.5".
fn fmt_p(p: f64) -> String {
    format!("{p}")
}

/// Apply the thread-count variable, if set, to the global pool.
pub fn configure_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
            })?;
            // a second build (tests) keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(rayon::current_num_threads())
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[model]\nlambda = -4\nkappa = 1\n").unwrap();
        assert_eq!(c.p_list, vec![2.0]);
        assert_eq!(c.frames, 40);
        assert_eq!(c.periodic_n, 512);
        assert_eq!(c.stages.len(), 7);
        assert_eq!(
            c.datum,
            DatumSpec::Family {
                case: BenchmarkCase::LkNegSingleMax,
                amplitude: 1.0
            }
        );
    }

    #[test]
    fn lambda_zero_is_named() {
        let e = parse_config_str("[model]\nlambda = 0\nkappa = 1\n").unwrap_err();
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("lambda != 0"), "{:?}", e);
        assert_eq!((e[0].line, e[0].column), (2, 10));
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let e = parse_config_str("[model]\nlamda = 1\nkappa = 1\n").unwrap_err();
        assert!(e.iter().any(|i| i.message.contains("`lamda`") && i.message.contains("`lambda`")));
        // the missing lambda is reported too
        assert!(e.iter().any(|i| i.message.contains("missing required key `lambda`")));
    }

    #[test]
    fn all_violations_are_listed() {
        let text = "[model]\nlambda = 0\nkappa = x\np = 0.5\n[eta]\nmax_frac = 1.5\n[grid]\nperiodic_n = 7\n";
        let e = parse_config_str(text).unwrap_err();
        assert_eq!(e.len(), 5, "{e:?}");
    }

    #[test]
    fn comments_sections_and_lists() {
        let text = "# lab\n[datum]\nfamily = explicit ; trailing\nu0_cos = 0, 0.1\nu0_sin = 0, 0.2\nrho_cos = 1\n\n[model]\nlambda = 2\nkappa = 1\np = 1, 2\n[stages]\nthreepoint = false\n";
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.p_list, vec![1.0, 2.0]);
        assert!(!c.stages.contains(&Stage::Threepoint));
        assert!(matches!(c.datum, DatumSpec::Explicit { .. }));
        c.datum.build().unwrap();
    }

    #[test]
    fn structural_errors_have_positions() {
        let e = parse_config_str("lambda = 1\n[modle]\n  what\n").unwrap_err();
        assert!(e.iter().any(|i| i.line == 1 && i.message.contains("outside")));
        assert!(e.iter().any(|i| i.line == 2 && i.message.contains("[model]")));
        assert!(e.iter().any(|i| i.line == 3 && i.column == 3));
    }

    #[test]
    fn duplicate_and_family_errors() {
        let e = parse_config_str("[model]\nlambda = 1\nlambda = 2\nkappa = 1\n[datum]\nfamily = LK_POS_SINGLE_RUT\n")
            .unwrap_err();
        assert!(e.iter().any(|i| i.message.contains("duplicate")));
        assert!(e.iter().any(|i| i.message.contains("LK_POS_SINGLE_ROOT")));
    }
}

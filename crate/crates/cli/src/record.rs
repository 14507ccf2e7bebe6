//! Result records and their CSV, JSON and plot-script renderings.
//!
//! CSV is long-format with the header
//! `schema_version,experiment,record,kind,key,value`, one row per parameter
//! (`kind = param`) or result (`kind = value`). Floats are printed with 17
//! significant digits. JSON is `{"schema_version", "code_version", "records"}`
//! with keys in sorted order.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:.16e}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        // JSON has no non-finite numbers
        if x.is_finite() {
            Value::Float(x)
        } else {
            Value::Text(x.to_string())
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl From<$t> for Value {
            fn from(v: $t) -> Self {
                i64::try_from(v).map(Value::Int).unwrap_or_else(|_| Value::Text(v.to_string()))
            }
        }
    )*};
}
int_value!(i32, i64, u32, u64, usize, u128);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, Value>,
    pub values: BTreeMap<String, Value>,
}

impl Record {
    pub fn new(experiment: &str) -> Self {
        Record {
            experiment: experiment.to_string(),
            seed: None,
            params: BTreeMap::new(),
            values: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn param(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }

    pub fn value(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.values.insert(key.to_string(), v.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub const CSV_HEADER: [&str; 6] = ["schema_version", "experiment", "record", "kind", "key", "value"];

pub fn to_csv(records: &[Record]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = |kind: &str, key: &str, value: String| {
            w.write_record([SCHEMA_VERSION.to_string(), r.experiment.clone(), i.to_string(), kind.into(), key.into(), value])
        };
        if let Some(seed) = r.seed {
            row("param", "seed", seed.to_string())?;
        }
        for (k, v) in &r.params {
            row("param", k, v.to_string())?;
        }
        for (k, v) in &r.values {
            row("value", k, v.to_string())?;
        }
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(io::Error::other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub schema_version: u32,
    pub code_version: String,
    pub records: Vec<Record>,
}

pub fn to_json(records: &[Record]) -> String {
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        code_version: CODE_VERSION.to_string(),
        records: records.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("records serialize") + "\n"
}

pub fn from_json(text: &str) -> serde_json::Result<Document> {
    serde_json::from_str(text)
}

pub fn render(records: &[Record], format: Format) -> io::Result<String> {
    match format {
        Format::Csv => to_csv(records),
        Format::Json => Ok(to_json(records)),
    }
}

/// Python script plotting every numeric value against the first numeric
/// parameter of each experiment, reading the data file by relative path.
pub fn plot_script(data_file: &str, format: Format) -> String {
    let loader = match format {
        Format::Csv => {
            "    rows = {}\n    with open(path, newline='') as f:\n        for r in csv.DictReader(f):\n            rec = rows.setdefault((r['experiment'], int(r['record'])), {'experiment': r['experiment'], 'params': {}, 'values': {}})\n            rec['params' if r['kind'] == 'param' else 'values'][r['key']] = r['value']\n    return list(rows.values())\n"
        }
        Format::Json => "    with open(path) as f:\n        return json.load(f)['records']\n",
    };
    format!(
        "\"\"\"Plots for {data_file}; run from the directory holding it.\"\"\"\n\
import csv\nimport json\nimport os\nimport sys\n\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n\
HERE = os.path.dirname(os.path.abspath(__file__))\nDATA = os.path.join(HERE, {data_file:?})\n\n\n\
def num(v):\n    try:\n        return float(v)\n    except (TypeError, ValueError):\n        return None\n\n\n\
def load(path):\n{loader}\n\n\
def main():\n    records = load(DATA)\n    by_exp = {{}}\n    for r in records:\n        by_exp.setdefault(r['experiment'], []).append(r)\n    for exp, recs in by_exp.items():\n        xkey = next((k for k, v in sorted(recs[0]['params'].items()) if num(v) is not None), None)\n        if xkey is None:\n            continue\n        fig, ax = plt.subplots()\n        for ykey in sorted(recs[0]['values']):\n            pts = [(num(r['params'].get(xkey)), num(r['values'].get(ykey))) for r in recs]\n            pts = [(x, y) for x, y in pts if x is not None and y is not None and x > 0 and y > 0]\n            if len(pts) >= 2:\n                ax.loglog(*zip(*sorted(pts)), marker='o', label=ykey)\n        ax.set_xlabel(xkey)\n        ax.set_title(exp)\n        if ax.lines:\n            ax.legend(fontsize='small')\n            fig.savefig(os.path.join(HERE, exp + '.png'), dpi=120)\n        plt.close(fig)\n    return 0\n\n\n\
if __name__ == '__main__':\n    sys.exit(main())\n"
    )
}

/// Writes `<dir>/<stem>.<ext>` and, with `plot`, `<dir>/<stem>_plot.py`.
pub fn emit(records: &[Record], format: Format, plot: bool, dir: &Path, stem: &str) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = format!("{stem}.{}", format.extension());
    let data = dir.join(&name);
    std::fs::write(&data, render(records, format)?)?;
    let mut written = vec![data];
    if plot {
        let script = dir.join(format!("{stem}_plot.py"));
        std::fs::write(&script, plot_script(&name, format))?;
        written.push(script);
    }
    Ok(written)
}

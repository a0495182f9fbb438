use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Fixed leading columns of every trace; per-machine frequencies
/// (`f_<unit>`) and per-bus magnitudes (`v_<bus>`) follow.
pub const LEADING_COLUMNS: [&str; 8] = [
    "t_s",
    "f_coi_pu",
    "conv_p_pu",
    "conv_q_pu",
    "pcc_v_pu",
    "dc_voltage_v",
    "dc_current_a",
    "soc",
];

/// Column-oriented time series. Missing values (tripped machines, absent
/// converter) are NaN in memory and empty fields in CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        let data = vec![Vec::new(); columns.len()];
        Self { columns, data }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        for (c, v) in self.data.iter_mut().zip(row) {
            c.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    fn required(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::schema(name, "trace lacks this column"))
    }

    pub fn time(&self) -> Result<&[f64]> {
        self.required("t_s")
    }

    /// Center-of-inertia frequency.
    pub fn frequency(&self) -> Result<&[f64]> {
        self.required("f_coi_pu")
    }

    /// Keeps every `k`-th row, starting with the first.
    pub fn decimate(&self, k: usize) -> Self {
        let k = k.max(1);
        Self {
            columns: self.columns.clone(),
            data: self
                .data
                .iter()
                .map(|c| c.iter().step_by(k).copied().collect())
                .collect(),
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        let mut rec = Vec::with_capacity(self.columns.len());
        for r in 0..self.len() {
            rec.clear();
            rec.extend(self.data.iter().map(|c| {
                let v = c[r];
                if v.is_nan() {
                    String::new()
                } else {
                    format!("{v}")
                }
            }));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R, source: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let columns: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t_s") {
            return Err(Error::parse(source, 1, "first column must be `t_s`"));
        }
        let mut trace = Trace::new(columns);
        let mut row = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            row.clear();
            for field in rec.iter() {
                let field = field.trim();
                row.push(if field.is_empty() {
                    f64::NAN
                } else {
                    field
                        .parse()
                        .map_err(|_| Error::parse(source, i + 2, format!("bad number `{field}`")))?
                });
            }
            if row.len() != trace.columns.len() {
                return Err(Error::parse(source, i + 2, "row width differs from header"));
            }
            trace.push_row(&row);
        }
        Ok(trace)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), &path.display().to_string())
    }
}

//! Dataset CSV: an optional `# meta {json}` line, then `class,domain,w<λ1>,...`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flowbridge_core::Tensor;

use crate::dataset::{DatasetMeta, SpectralDataset};
use crate::error::{DataError, Result};
use crate::grid::check_grid;

const META_PREFIX: &str = "# meta ";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes values with 17 significant digits so reloading is bit-exact.
pub fn write_dataset(ds: &SpectralDataset, out: &mut impl Write) -> std::io::Result<()> {
    let meta = serde_json::to_string(&ds.meta).expect("meta serializes");
    writeln!(out, "{META_PREFIX}{meta}")?;
    write!(out, "class,domain")?;
    for w in &ds.wavelengths {
        write!(out, ",w{w}")?;
    }
    writeln!(out)?;
    let mut line = String::new();
    for i in 0..ds.len() {
        line.clear();
        if let Some(c) = ds.labels[i] {
            line.push_str(&c.to_string());
        }
        line.push(',');
        line.push_str(ds.domain.as_str());
        for v in ds.row(i) {
            line.push_str(&format!(",{v:.16e}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn save_dataset(ds: &SpectralDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let tmp = path.with_extension("csv.tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut out = BufWriter::new(file);
    write_dataset(ds, &mut out)
        .and_then(|_| out.flush())
        .map_err(io_err(&tmp))?;
    drop(out);
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_dataset(path: &Path) -> Result<SpectralDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset(BufReader::new(file), &path.display().to_string())
}

pub fn read_dataset(mut input: impl BufRead, name: &str) -> Result<SpectralDataset> {
    let parse = |line: u64, msg: String| DataError::Parse {
        path: name.to_string(),
        line,
        msg,
    };
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| parse(1, e.to_string()))?;
    let (meta, offset) = match first.strip_prefix(META_PREFIX) {
        Some(json) => (
            serde_json::from_str::<DatasetMeta>(json.trim()).map_err(|e| parse(1, format!("bad metadata: {e}")))?,
            1,
        ),
        None => (DatasetMeta::default(), 0),
    };
    let rest = if offset == 0 { Some(first) } else { None };
    let chained = std::io::Cursor::new(rest.unwrap_or_default()).chain(input);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(chained);

    let header = rdr.headers().map_err(|e| parse(offset + 1, e.to_string()))?.clone();
    for (pos, col) in ["class", "domain"].into_iter().enumerate() {
        if header.get(pos) != Some(col) {
            return Err(DataError::MissingColumn {
                path: name.to_string(),
                column: col.to_string(),
            });
        }
    }
    let wavelengths = header
        .iter()
        .skip(2)
        .map(|h| {
            h.strip_prefix('w')
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| parse(offset + 1, format!("bad wavelength column '{h}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if wavelengths.is_empty() {
        return Err(DataError::MissingColumn {
            path: name.to_string(),
            column: "w<wavelength>".into(),
        });
    }
    check_grid(&wavelengths).map_err(|e| parse(offset + 1, e.to_string()))?;

    let d = wavelengths.len();
    let (mut labels, mut values, mut domain) = (vec![], Vec::with_capacity(d * 1024), None);
    let mut record = csv::StringRecord::new();
    loop {
        let line = offset + 2 + labels.len() as u64;
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse(line, e.to_string())),
        }
        if record.len() != d + 2 {
            return Err(parse(line, format!("expected {} fields, found {}", d + 2, record.len())));
        }
        let label = match &record[0] {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| parse(line, format!("bad class '{s}'")))?),
        };
        let dom = record[1].parse().map_err(|e: String| parse(line, e))?;
        match domain {
            None => domain = Some(dom),
            Some(prev) if prev != dom => {
                return Err(parse(line, format!("domain '{dom}' differs from '{prev}'")));
            }
            _ => {}
        }
        for f in record.iter().skip(2) {
            let v: f64 = f.parse().map_err(|_| parse(line, format!("bad value '{f}'")))?;
            values.push(v);
        }
        labels.push(label);
    }
    let domain = domain.ok_or_else(|| parse(offset + 2, "dataset has no rows".into()))?;
    let spectra = Tensor::new(vec![labels.len(), d], values)?;
    SpectralDataset::new(wavelengths, spectra, labels, domain, meta)
}

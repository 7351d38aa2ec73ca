//! Trace files: a CSV of per-step KPMs plus an optional binary IQ sidecar.
//!
//! The CSV starts with `#` header lines carrying the generator config as
//! JSON. The sidecar (`<prefix>.iq`) is little-endian:
//!
//! ```text
//! magic "ADSIQ001" | u32 count | u32 subcarriers | u32 symbols
//! count x { u64 step | u64 byte offset | u32 allocated PRBs | u32 reserved }
//! count x grid of 2*subcarriers*symbols f32
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{
    ChannelTrace, IqCapture, IqGrid, KpmSample, TraceConfig, TraceStep, IQ_PLANES, IQ_SUBCARRIERS,
    IQ_SYMBOLS,
};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ADSIQ001";
const HEADER_LEN: u64 = 8 + 4 * 3;
const ENTRY_LEN: u64 = 8 + 8 + 4 + 4;
const GRID_VALUES: usize = IQ_PLANES * IQ_SUBCARRIERS * IQ_SYMBOLS;

const COLUMNS: &str = "t_s,noise_dbm,tp_true_mbps,rsrp_dbm,rsrq_db,sinr_db,p_a_db,ri,cqi,cri,\
pusch_sinr_db,tpc_db,ul_mcs,ul_bler,harq0,harq1,harq2,harq3,iq_index";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFiles {
    pub csv: PathBuf,
    pub iq: Option<PathBuf>,
}

impl TraceFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        let mut csv = prefix.as_os_str().to_owned();
        csv.push(".trace.csv");
        let mut iq = prefix.as_os_str().to_owned();
        iq.push(".iq");
        TraceFiles {
            csv: csv.into(),
            iq: Some(iq.into()),
        }
    }
}

/// Writes `<prefix>.trace.csv` and, when any step carries IQ, `<prefix>.iq`.
pub fn write_trace(trace: &ChannelTrace, prefix: &Path) -> Result<TraceFiles> {
    let mut files = TraceFiles::for_prefix(prefix);
    let iq_steps: Vec<usize> = (0..trace.len())
        .filter(|&i| trace.steps[i].iq.is_some())
        .collect();
    if iq_steps.is_empty() {
        files.iq = None;
    }
    if let Some(iq_path) = &files.iq {
        write_sidecar(trace, &iq_steps, iq_path)?;
    }

    let csv_path = &files.csv;
    let f = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = BufWriter::new(f);
    let cfg = &trace.config;
    let config_json = serde_json::to_string(cfg).map_err(|e| Error::Domain(e.to_string()))?;
    let iq_name = files
        .iq
        .as_ref()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut body = String::new();
    body.push_str(&format!(
        "# adasplit trace v{}\n",
        env!("CARGO_PKG_VERSION")
    ));
    body.push_str(&format!("# scenario={}\n", cfg.scenario));
    body.push_str(&format!("# seed={}\n", cfg.seed));
    body.push_str(&format!("# load={}\n", cfg.load));
    body.push_str(&format!("# alloc_ratio={}\n", cfg.alloc_ratio));
    body.push_str(&format!("# duration_s={}\n", cfg.duration_s));
    body.push_str(&format!("# iq_file={iq_name}\n"));
    body.push_str(&format!("# config={config_json}\n"));
    body.push_str(COLUMNS);
    body.push('\n');
    let mut iq_index = 0usize;
    for s in &trace.steps {
        let k = &s.kpm;
        let idx = if s.iq.is_some() {
            iq_index += 1;
            (iq_index - 1).to_string()
        } else {
            String::new()
        };
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.t_s,
            s.noise_dbm,
            s.tp_true_mbps,
            k.rsrp_dbm,
            k.rsrq_db,
            k.sinr_db,
            k.p_a_db,
            k.ri,
            k.cqi,
            k.cri,
            k.pusch_sinr_db,
            k.tpc_db,
            k.ul_mcs,
            k.ul_bler,
            k.harq_counts[0],
            k.harq_counts[1],
            k.harq_counts[2],
            k.harq_counts[3],
            idx
        ));
    }
    w.write_all(body.as_bytes())
        .map_err(|e| Error::io(csv_path, e))?;
    w.flush().map_err(|e| Error::io(csv_path, e))?;
    Ok(files)
}

fn write_sidecar(trace: &ChannelTrace, iq_steps: &[usize], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io_err = |e| Error::io(path, e);
    let count = iq_steps.len() as u64;
    let mut header = Vec::with_capacity((HEADER_LEN + ENTRY_LEN * count) as usize);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&(count as u32).to_le_bytes());
    header.extend_from_slice(&(IQ_SUBCARRIERS as u32).to_le_bytes());
    header.extend_from_slice(&(IQ_SYMBOLS as u32).to_le_bytes());
    let data_start = HEADER_LEN + ENTRY_LEN * count;
    let grid_bytes = (GRID_VALUES * 4) as u64;
    for (k, &i) in iq_steps.iter().enumerate() {
        let cap = trace.steps[i].iq.as_ref().expect("filtered on presence");
        header.extend_from_slice(&(i as u64).to_le_bytes());
        header.extend_from_slice(&(data_start + k as u64 * grid_bytes).to_le_bytes());
        header.extend_from_slice(&cap.allocated_prbs().to_le_bytes());
        header.extend_from_slice(&0u32.to_le_bytes());
    }
    w.write_all(&header).map_err(io_err)?;
    let mut buf = Vec::with_capacity(GRID_VALUES * 4);
    for &i in iq_steps {
        let grid = trace.steps[i]
            .iq
            .as_ref()
            .expect("filtered on presence")
            .grid(&trace.config.radio);
        buf.clear();
        for v in grid.raw() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_sidecar(path: &Path) -> Result<Vec<(u64, Arc<IqGrid>)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let io_err = |e| Error::io(path, e);
    let mut head = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut head).map_err(io_err)?;
    if &head[..8] != MAGIC {
        return Err(Error::parse(
            0,
            format!("{}: not an IQ sidecar", path.display()),
        ));
    }
    let u32_at = |b: &[u8], o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |b: &[u8], o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
    let count = u32_at(&head, 8) as usize;
    let (sc, sym) = (u32_at(&head, 12) as usize, u32_at(&head, 16) as usize);
    if sc != IQ_SUBCARRIERS || sym != IQ_SYMBOLS {
        return Err(Error::Dimension(format!(
            "IQ grid {sc}x{sym}, expected {IQ_SUBCARRIERS}x{IQ_SYMBOLS}"
        )));
    }
    let mut table = vec![0u8; count * ENTRY_LEN as usize];
    r.read_exact(&mut table).map_err(io_err)?;
    let mut pos = HEADER_LEN + ENTRY_LEN * count as u64;
    let mut out = Vec::with_capacity(count);
    let mut bytes = vec![0u8; GRID_VALUES * 4];
    for k in 0..count {
        let e = &table[k * ENTRY_LEN as usize..(k + 1) * ENTRY_LEN as usize];
        let (step, offset, prbs) = (u64_at(e, 0), u64_at(e, 8), u32_at(e, 16));
        if offset != pos {
            return Err(Error::parse(
                0,
                format!("IQ entry {k}: non-contiguous offset {offset}"),
            ));
        }
        r.read_exact(&mut bytes).map_err(io_err)?;
        pos += bytes.len() as u64;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let grid = IqGrid::from_raw(data, prbs)
            .ok_or_else(|| Error::Dimension(format!("IQ entry {k}: {prbs} PRBs out of range")))?;
        out.push((step, Arc::new(grid)));
    }
    Ok(out)
}

/// Reads a trace written by [`write_trace`]. IQ grids are loaded from the
/// sidecar named in the header, resolved next to the CSV.
pub fn read_trace(csv_path: &Path) -> Result<ChannelTrace> {
    let f = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let reader = BufReader::new(f);
    let mut config: Option<TraceConfig> = None;
    let mut iq_file = String::new();
    let mut rows: Vec<(usize, String)> = Vec::new();
    let mut saw_columns = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(csv_path, e))?;
        let lineno = n + 1;
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(json) = meta.strip_prefix("config=") {
                config = Some(
                    serde_json::from_str(json).map_err(|e| Error::parse(lineno, e.to_string()))?,
                );
            } else if let Some(name) = meta.strip_prefix("iq_file=") {
                iq_file = name.trim().to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            if line.trim() != COLUMNS {
                return Err(Error::parse(lineno, "unexpected column header"));
            }
            saw_columns = true;
            continue;
        }
        rows.push((lineno, line));
    }
    let config = config.ok_or_else(|| Error::parse(0, "missing '# config=' header"))?;

    let grids = if iq_file.is_empty() {
        Vec::new()
    } else {
        let dir = csv_path.parent().unwrap_or_else(|| Path::new("."));
        read_sidecar(&dir.join(&iq_file))?
    };

    let mut steps = Vec::with_capacity(rows.len());
    let mut prev_counts = [0u64; 4];
    for (lineno, line) in rows {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 19 {
            return Err(Error::parse(
                lineno,
                format!("expected 19 columns, got {}", cols.len()),
            ));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(lineno, format!("column {i}: {e}")))
        };
        let u = |i: usize| -> Result<u64> {
            cols[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::parse(lineno, format!("column {i}: {e}")))
        };
        let harq_counts = [u(14)?, u(15)?, u(16)?, u(17)?];
        for rv in 0..4 {
            if harq_counts[rv] < prev_counts[rv] {
                return Err(Error::CounterRegression {
                    rv,
                    before: prev_counts[rv],
                    after: harq_counts[rv],
                });
            }
        }
        prev_counts = harq_counts;
        let iq = match cols[18].trim() {
            "" => None,
            s => {
                let k: usize = s
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("iq_index: {e}")))?;
                let (_, g) = grids
                    .get(k)
                    .ok_or_else(|| Error::parse(lineno, format!("iq_index {k} beyond sidecar")))?;
                Some(IqCapture::Stored(Arc::clone(g)))
            }
        };
        let t_s = f(0)?;
        steps.push(TraceStep {
            t_s,
            noise_dbm: f(1)?,
            tp_true_mbps: f(2)?,
            kpm: KpmSample {
                t_s,
                rsrp_dbm: f(3)?,
                rsrq_db: f(4)?,
                sinr_db: f(5)?,
                p_a_db: f(6)?,
                ri: u(7)? as u32,
                cqi: u(8)? as u32,
                cri: u(9)? as u32,
                pusch_sinr_db: f(10)?,
                tpc_db: f(11)?,
                ul_mcs: u(12)? as u32,
                ul_bler: f(13)?,
                harq_counts,
            },
            iq,
        });
    }
    Ok(ChannelTrace { config, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_trace, Scenario};

    #[test]
    fn round_trip_preserves_scalars_and_grids() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TraceConfig::new(Scenario::Jamming, 2.0, 17).with_iq_every(Some(5));
        let trace = generate_trace(&cfg).unwrap();
        let files = write_trace(&trace, &dir.path().join("run")).unwrap();
        assert!(files.iq.as_ref().unwrap().exists());
        let back = read_trace(&files.csv).unwrap();
        assert_eq!(back.config, trace.config);
        assert_eq!(back.len(), trace.len());
        for (a, b) in trace.steps.iter().zip(&back.steps) {
            assert_eq!(a.t_s, b.t_s);
            assert_eq!(a.noise_dbm, b.noise_dbm);
            assert_eq!(a.tp_true_mbps, b.tp_true_mbps);
            assert_eq!(a.kpm, b.kpm);
            match (&a.iq, &b.iq) {
                (None, None) => {}
                (Some(x), Some(y)) => assert_eq!(x.grid(&cfg.radio), y.grid(&cfg.radio)),
                _ => panic!("IQ presence differs at t={}", a.t_s),
            }
        }
    }

    #[test]
    fn no_sidecar_without_iq() {
        let dir = tempfile::tempdir().unwrap();
        let trace =
            generate_trace(&TraceConfig::new(Scenario::None, 1.0, 1).with_iq_every(None)).unwrap();
        let files = write_trace(&trace, &dir.path().join("clean")).unwrap();
        assert!(files.iq.is_none());
        assert!(!dir.path().join("clean.iq").exists());
        assert_eq!(read_trace(&files.csv).unwrap().len(), 10);
    }

    #[test]
    fn rejects_counter_regression() {
        let dir = tempfile::tempdir().unwrap();
        let trace =
            generate_trace(&TraceConfig::new(Scenario::None, 0.3, 1).with_iq_every(None)).unwrap();
        let files = write_trace(&trace, &dir.path().join("t")).unwrap();
        let text = std::fs::read_to_string(&files.csv).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let last = lines.len() - 1;
        let mut cols: Vec<String> = lines[last].split(',').map(String::from).collect();
        cols[14] = "0".into();
        lines[last] = cols.join(",");
        std::fs::write(&files.csv, lines.join("\n")).unwrap();
        assert!(matches!(
            read_trace(&files.csv),
            Err(Error::CounterRegression { rv: 0, .. })
        ));
    }
}

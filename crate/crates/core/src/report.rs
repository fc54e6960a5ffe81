//! File emission: CSV tables, 16-bit grayscale PNGs with JSON sidecars, a
//! reproducibility manifest, and tidy plot-ready figure tables derived from
//! a finished results directory.
//!
//! Every writer is deterministic: floats are formatted with Rust's
//! shortest-round-trip representation, rows follow a fixed sort order, and no
//! timestamps are embedded, so identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{eyes_to_csv, ExperimentConfig, EyeSection};
use crate::error::{Error, Result};
use crate::experiment::{RenderedCondition, RunOutput};
use crate::field::RealField;

const RESULTS_CSV: &str = "results.csv";
const CURVES_CSV: &str = "through_focus_curves.csv";
const RADIAL_CSV: &str = "radial_mtf.csv";
const CUTOFF_CSV: &str = "cutoff.csv";
const DEPTH_MEANS_CSV: &str = "depth_means.csv";
const EYES_CSV: &str = "eyes.csv";
const MANIFEST_JSON: &str = "run_manifest.json";

/// Shortest round-trip decimal form of a float (Rust's default display).
fn fmt(v: f64) -> String {
    v.to_string()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}

/// Writes `content` and records the file in the written/hash ledgers.
struct Emitter {
    dir: PathBuf,
    written: Vec<PathBuf>,
    hashes: BTreeMap<String, String>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Emitter { dir: dir.to_path_buf(), written: Vec::new(), hashes: BTreeMap::new() })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        self.written.push(path);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }
}

/// Normalizes a field to its peak and encodes it as a 16-bit grayscale PNG.
/// Returns the encoded bytes and the peak value (the sidecar records it so
/// physical values are recoverable).
fn encode_png16(field: &RealField) -> Result<(Vec<u8>, f64)> {
    let peak = field.max_value();
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let n = field.n() as u32;
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(n, n);
    for (r, row) in field.values().outer_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let level = (v.max(0.0) * scale).round().min(65535.0) as u16;
            img.put_pixel(c as u32, r as u32, image::Luma([level]));
        }
    }
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::domain(format!("PNG encoding failed: {e}")))?;
    Ok((bytes, peak))
}

fn results_csv(output: &RunOutput) -> String {
    let mut s =
        String::from("eye_id,metric,density,rendered_relD,predicted_D,error_D,clamped,boundary_peak\n");
    for r in &output.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.eye_id,
            r.metric,
            r.density,
            fmt(r.rendered_rel_depth_d),
            fmt(r.predicted_accommodation_d),
            fmt(r.accommodation_error_d),
            r.clamped,
            r.boundary_peak
        );
    }
    s
}

fn curves_csv(output: &RunOutput) -> String {
    let mut s =
        String::from("eye_id,metric,density,rendered_relD,relative_accommodation_D,value\n");
    for curve in &output.curves {
        for (rel, value) in curve.relative_accommodation_d.iter().zip(&curve.values) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                curve.eye_id,
                curve.metric,
                curve.density,
                fmt(curve.rendered_rel_depth_d),
                fmt(*rel),
                fmt(*value)
            );
        }
    }
    s
}

fn radial_csv(output: &RunOutput) -> String {
    let mut s = String::from("eye_id,metric,density,rendered_relD,frequency_cpd,gain\n");
    for record in &output.mtf_at_focus {
        for (f, g) in record.mtf.frequencies_cpd.iter().zip(&record.mtf.gains) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                record.eye_id,
                record.metric,
                record.density,
                fmt(record.rendered_rel_depth_d),
                fmt(*f),
                fmt(*g)
            );
        }
    }
    s
}

fn cutoff_csv(output: &RunOutput) -> String {
    let mut s =
        String::from("eye_id,metric,density,rendered_relD,predicted_D,cutoff_cpd,saturated\n");
    for record in &output.mtf_at_focus {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            record.eye_id,
            record.metric,
            record.density,
            fmt(record.rendered_rel_depth_d),
            fmt(record.predicted_accommodation_d),
            fmt(record.cutoff.frequency_cpd),
            record.cutoff.saturated
        );
    }
    s
}

fn depth_means_csv(output: &RunOutput) -> String {
    let mut s =
        String::from("metric,density,rendered_relD,mean_predicted_D,mean_error_D,eye_count\n");
    for mean in &output.depth_means {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            mean.metric,
            mean.density,
            fmt(mean.rendered_rel_depth_d),
            fmt(mean.mean_predicted_accommodation_d),
            fmt(mean.mean_error_d),
            mean.eye_count
        );
    }
    s
}

fn image_sidecar(config: &ExperimentConfig, image: &RenderedCondition, peaks: (f64, f64)) -> String {
    let value = serde_json::json!({
        "psf_png": format!("psf_{}.png", image.stem),
        "image_png": format!("image_{}.png", image.stem),
        "eye_id": image.eye_id,
        "density": image.density,
        "rendered_rel_depth_D": image.rendered_rel_depth_d,
        "accommodation_D": image.accommodation_d,
        "accommodation_predicted": image.accommodation_predicted,
        "grid": { "samples": config.grid.samples, "pitch_um": config.grid.pitch_um },
        "letter_height_um": config.letter_height_um,
        "psf_peak_per_um2": peaks.0,
        "image_peak": peaks.1,
        "encoding": "16-bit grayscale, linear, white = peak value",
    });
    let mut text = serde_json::to_string_pretty(&value).expect("sidecar JSON serializes");
    text.push('\n');
    text
}

/// Writes the complete report set for a finished run into
/// `config.output_dir` and returns the written paths. The manifest goes last
/// so it can record the hash of every other artifact.
pub fn write_reports(config: &ExperimentConfig, output: &RunOutput) -> Result<Vec<PathBuf>> {
    let mut emitter = Emitter::new(&config.output_dir)?;
    emitter.write_text(RESULTS_CSV, &results_csv(output))?;
    emitter.write_text(CURVES_CSV, &curves_csv(output))?;
    emitter.write_text(RADIAL_CSV, &radial_csv(output))?;
    emitter.write_text(CUTOFF_CSV, &cutoff_csv(output))?;
    emitter.write_text(DEPTH_MEANS_CSV, &depth_means_csv(output))?;
    emitter.write_text(EYES_CSV, &eyes_to_csv(&output.eyes))?;

    for image in &output.images {
        let (psf_bytes, psf_peak) = encode_png16(image.psf.field())?;
        emitter.write_bytes(&format!("psf_{}.png", image.stem), &psf_bytes)?;
        let (img_bytes, img_peak) = encode_png16(&image.retinal_image)?;
        emitter.write_bytes(&format!("image_{}.png", image.stem), &img_bytes)?;
        emitter.write_text(
            &format!("{}.json", image.stem),
            &image_sidecar(config, image, (psf_peak, img_peak)),
        )?;
    }

    let manifest = manifest_json(config, output, &emitter.hashes)?;
    emitter.write_text(MANIFEST_JSON, &manifest)?;
    Ok(emitter.written)
}

/// Hashes of the assets the run actually used (bundled bytes or file bytes).
fn asset_hashes(config: &ExperimentConfig) -> Result<BTreeMap<String, String>> {
    let mut hashes = BTreeMap::new();
    hashes.insert(
        "luminosity_table".to_string(),
        sha256_hex(include_str!("../assets/cie_luminosity_2deg.csv").as_bytes()),
    );
    let population = match &config.eyes {
        EyeSection::Population { asset: Some(path), .. } => Some(fs::read(path)?),
        EyeSection::Population { asset: None, .. } => {
            Some(include_str!("../assets/population_6mm.json").as_bytes().to_vec())
        }
        EyeSection::File { .. } => None,
    };
    if let Some(bytes) = population {
        hashes.insert("population_model".to_string(), sha256_hex(&bytes));
    }
    if let EyeSection::File { path } = &config.eyes {
        hashes.insert("eye_coefficients".to_string(), sha256_hex(&fs::read(path)?));
    }
    let ncsf = match &config.ncsf_asset {
        Some(path) => fs::read(path)?,
        None => include_str!("../assets/ncsf_default.json").as_bytes().to_vec(),
    };
    hashes.insert("ncsf_parameters".to_string(), sha256_hex(&ncsf));
    Ok(hashes)
}

fn manifest_json(
    config: &ExperimentConfig,
    output: &RunOutput,
    file_hashes: &BTreeMap<String, String>,
) -> Result<String> {
    let config_value = serde_json::to_value(config)?;
    let config_sha = sha256_hex(serde_json::to_string(&config_value)?.as_bytes());
    let manifest = serde_json::json!({
        "tool": "eyefield",
        "version": env!("CARGO_PKG_VERSION"),
        "condition_count": output.condition_count,
        "eye_count": output.eyes.len(),
        "config": config_value,
        "config_sha256": config_sha,
        "asset_sha256": asset_hashes(config)?,
        "output_sha256": file_hashes,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    Ok(text)
}

// ---------------------------------------------------------------------------
// Figure tables: tidy long-format CSVs derived from a results directory.
// ---------------------------------------------------------------------------

/// A parsed CSV: header names and rows of string fields.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::domain(format!("{} is empty", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::domain(format!("missing CSV column {name:?}")))
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::domain(format!("expected a number in CSV, got {field:?}")))
}

/// Condition key used to group and sort figure rows: metric, density, depth,
/// then any further axes as raw strings (numeric fields keep their original
/// text, so re-emission is lossless).
#[derive(Clone, PartialEq)]
struct Keyed {
    metric: String,
    density: u32,
    depth: f64,
    rest: Vec<String>,
    value: f64,
}

fn sort_keyed(rows: &mut [Keyed]) {
    rows.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(a.density.cmp(&b.density))
            .then(a.depth.total_cmp(&b.depth))
            .then(a.rest.cmp(&b.rest))
    });
}

/// Mean of `value` over rows sharing (metric, density, depth, rest[1..]),
/// i.e. collapsing the eye axis, which must be `rest[0]`.
fn eye_means(rows: &[Keyed]) -> Vec<Keyed> {
    let mut sums: BTreeMap<(String, u32, String, Vec<String>), (f64, usize)> = BTreeMap::new();
    for row in rows {
        let key = (
            row.metric.clone(),
            row.density,
            // Depth as bits for exact grouping; the float key is recovered
            // below from a representative row.
            format!("{:016x}", row.depth.to_bits()),
            row.rest[1..].to_vec(),
        );
        let entry = sums.entry(key).or_insert((0.0, 0));
        entry.0 += row.value;
        entry.1 += 1;
    }
    let mut means = Vec::with_capacity(sums.len());
    for ((metric, density, depth_bits, rest_tail), (sum, count)) in sums {
        let depth = f64::from_bits(u64::from_str_radix(&depth_bits, 16).expect("round trip"));
        let mut rest = vec!["mean".to_string()];
        rest.extend(rest_tail);
        means.push(Keyed { metric, density, depth, rest, value: sum / count as f64 });
    }
    means
}

fn figure_csv(header: &str, rows: &[Keyed], depth_text: impl Fn(f64) -> String) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for row in rows {
        let mut fields = vec![row.metric.clone(), row.density.to_string(), depth_text(row.depth)];
        fields.extend(row.rest.iter().cloned());
        fields.push(fmt(row.value));
        let _ = writeln!(s, "{}", fields.join(","));
    }
    s
}

/// Derives plot-ready figure tables from a finished results directory:
/// through-focus curve grids, accommodation error versus depth, radial MTFs
/// at predicted focus, and mean cut-off versus depth — each with per-eye rows
/// plus `mean` series where applicable. Re-running is byte-idempotent.
pub fn render_figures(results_dir: &Path) -> Result<Vec<PathBuf>> {
    let required = [RESULTS_CSV, CURVES_CSV, RADIAL_CSV, CUTOFF_CSV];
    let missing: Vec<String> = required
        .iter()
        .filter(|name| !results_dir.join(name).is_file())
        .map(|name| name.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::domain(format!(
            "results directory {} is missing: {}",
            results_dir.display(),
            missing.join(", ")
        )));
    }

    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        let path = results_dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
        Ok(())
    };

    // Through-focus curves: per-eye rows plus a mean curve per condition.
    let curves = Table::load(&results_dir.join(CURVES_CSV))?;
    let rows = keyed_rows(
        &curves,
        &["eye_id", "relative_accommodation_D"],
        "value",
    )?;
    let mut all = [rows.clone(), eye_means(&rows)].concat();
    sort_keyed(&mut all);
    emit(
        "figure_through_focus.csv",
        figure_csv(
            "metric,density,rendered_relD,eye_id,relative_accommodation_D,value",
            &all,
            fmt,
        ),
    )?;

    // Accommodation error versus rendered depth.
    let results = Table::load(&results_dir.join(RESULTS_CSV))?;
    let rows = keyed_rows(&results, &["eye_id"], "error_D")?;
    let mut all = [rows.clone(), eye_means(&rows)].concat();
    sort_keyed(&mut all);
    emit(
        "figure_error_vs_depth.csv",
        figure_csv("metric,density,rendered_relD,eye_id,error_D", &all, fmt),
    )?;

    // Radial MTF at predicted focus.
    let radial = Table::load(&results_dir.join(RADIAL_CSV))?;
    let rows = keyed_rows(&radial, &["eye_id", "frequency_cpd"], "gain")?;
    let mut all = [rows.clone(), eye_means(&rows)].concat();
    sort_keyed(&mut all);
    emit(
        "figure_radial_mtf.csv",
        figure_csv("metric,density,rendered_relD,eye_id,frequency_cpd,gain", &all, fmt),
    )?;

    // Mean cut-off versus depth: one series per density.
    let cutoff = Table::load(&results_dir.join(CUTOFF_CSV))?;
    let rows = keyed_rows(&cutoff, &["eye_id"], "cutoff_cpd")?;
    let mut means = eye_means(&rows);
    for mean in &mut means {
        mean.rest.clear();
    }
    sort_keyed(&mut means);
    emit(
        "figure_cutoff_vs_depth.csv",
        figure_csv("metric,density,rendered_relD,mean_cutoff_cpd", &means, fmt),
    )?;

    Ok(written)
}

/// Extracts rows keyed by (metric, density, rendered_relD) with the named
/// extra axes carried verbatim and `value_column` parsed as the value.
fn keyed_rows(table: &Table, extra_columns: &[&str], value_column: &str) -> Result<Vec<Keyed>> {
    let metric = table.column("metric")?;
    let density = table.column("density")?;
    let depth = table.column("rendered_relD")?;
    let extras: Vec<usize> =
        extra_columns.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let value = table.column(value_column)?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(Keyed {
                metric: row[metric].clone(),
                density: row[density]
                    .parse::<u32>()
                    .map_err(|_| Error::domain(format!("bad density {:?}", row[density])))?,
                depth: parse_f64(&row[depth])?,
                rest: extras.iter().map(|&i| row[i].clone()).collect(),
                value: parse_f64(&row[value])?,
            })
        })
        .collect()
}

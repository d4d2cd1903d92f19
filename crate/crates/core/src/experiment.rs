//! Phantom benchmark generation, method comparison and hyperparameter
//! sweeps, with their container and CSV encodings.

use std::io::Write;
use std::sync::Arc;

use crate::container::{DatasetContainer, RecordData};
use crate::error::{Error, FormatError, Result};
use crate::kspace::{AcsBlock, CoilSensitivities, ComplexImage, KSpaceSample, SamplingPattern};
use crate::metrics::{MetricReport, Summary};
use crate::nn::{NetworkParams, ResNetArch, Tensor};
use crate::phantom::{make_phantom, simulate_acquisition, simulate_coils, NoiseSpec};
use crate::rng::derive_seed;
use crate::sampling::{gen_sheared_pattern, MaskDistribution, UndersamplingSpec};
use crate::solver::{cg_sense, UnrollConfig};
use crate::training::{normalize_dataset, reconstruct_test, train, TrainConfig, TrainMode, TrainingSample};

const PHANTOM_STREAM: u64 = 0x5048_4E54;
const NOISE_STREAM: u64 = 0x4E4F_4953;

/// Tikhonov weight of the CG-SENSE baseline on max-normalized k-space.
pub const CG_SENSE_L2: f64 = 0.01;
pub const CG_SENSE_ITERS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub coils: usize,
    pub ntrain: usize,
    pub ntest: usize,
    pub r_y: usize,
    pub r_z: usize,
    pub shear: i64,
    pub acs: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { n: 64, coils: 4, ntrain: 20, ntest: 8, r_y: 2, r_z: 2, shear: 1, acs: 8, sigma: 0.01, seed: 0 }
    }
}

impl BenchmarkConfig {
    pub fn spec(&self) -> UndersamplingSpec {
        UndersamplingSpec::new(self.r_y, self.r_z, self.shear, self.acs, self.acs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    /// Ground-truth image.
    pub image: ComplexImage,
    /// Noisy fully sampled k-space.
    pub y_ref: KSpaceSample,
    pub y_omega: KSpaceSample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkData {
    pub config: BenchmarkConfig,
    pub coils: Arc<CoilSensitivities>,
    pub omega: SamplingPattern,
    pub train: Vec<Case>,
    pub test: Vec<Case>,
}

fn make_case(cfg: &BenchmarkConfig, coils: &CoilSensitivities, omega: &SamplingPattern, idx: u64) -> Result<Case> {
    let image = make_phantom(cfg.n, derive_seed(derive_seed(cfg.seed, PHANTOM_STREAM), idx))?;
    let noise = NoiseSpec { sigma: cfg.sigma, seed: derive_seed(derive_seed(cfg.seed, NOISE_STREAM), idx) };
    let y_ref = simulate_acquisition(&image, coils, &SamplingPattern::full(cfg.n, cfg.n), noise)?;
    let y_omega = y_ref.restrict(omega)?;
    Ok(Case { image, y_ref, y_omega })
}

/// Seeded phantom train / test sets sharing one coil set and pattern.
pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkData> {
    if cfg.ntrain == 0 || cfg.ntest == 0 {
        return Err(Error::config("train and test sets must be non-empty"));
    }
    let coils = simulate_coils(cfg.n, cfg.coils)?;
    let omega = gen_sheared_pattern(cfg.n, cfg.n, &cfg.spec())?;
    let train = (0..cfg.ntrain).map(|i| make_case(cfg, &coils, &omega, i as u64)).collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.ntest)
        .map(|i| make_case(cfg, &coils, &omega, (cfg.ntrain + i) as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkData { config: *cfg, coils: Arc::new(coils), omega, train, test })
}

impl BenchmarkData {
    /// Normalized training samples with references attached.
    pub fn training_samples(&self) -> Result<Vec<TrainingSample>> {
        let raw = self
            .train
            .iter()
            .map(|c| TrainingSample::new(c.y_omega.clone(), self.coils.clone(), Some(c.y_ref.clone())))
            .collect::<Result<Vec<_>>>()?;
        normalize_dataset(&raw)
    }

    pub fn to_container(&self) -> Result<DatasetContainer> {
        let c = &self.config;
        let n = c.n;
        let mut out = DatasetContainer::new();
        out.push(
            "meta",
            &[9],
            RecordData::U64(vec![
                n as u64,
                c.coils as u64,
                c.ntrain as u64,
                c.ntest as u64,
                c.r_y as u64,
                c.r_z as u64,
                c.acs as u64,
                c.seed,
                c.shear as u64,
            ]),
        )?;
        out.push("sigma", &[1], RecordData::F64(vec![c.sigma]))?;
        out.push("coils", &[c.coils, n, n], RecordData::Complex(self.coils.maps().to_vec()))?;
        out.push("omega", &[n, n], RecordData::Bool(self.omega.mask().to_vec()))?;
        let acs = self.omega.acs();
        out.push("omega_acs", &[2], RecordData::U64(vec![acs.h as u64, acs.w as u64]))?;
        for (split, cases) in [("train", &self.train), ("test", &self.test)] {
            for (i, case) in cases.iter().enumerate() {
                out.push(format!("{split}/{i}/image"), &[n, n], RecordData::Complex(case.image.data().to_vec()))?;
                out.push(format!("{split}/{i}/kspace"), &[c.coils, n, n], RecordData::Complex(case.y_ref.data().to_vec()))?;
            }
        }
        Ok(out)
    }

    pub fn from_container(src: &DatasetContainer) -> Result<Self> {
        let (_, meta) = src.u64s("meta")?;
        if meta.len() != 9 {
            return Err(FormatError::Malformed("meta record must hold 9 values".into()).into());
        }
        let (_, sigma) = src.f64s("sigma")?;
        let config = BenchmarkConfig {
            n: meta[0] as usize,
            coils: meta[1] as usize,
            ntrain: meta[2] as usize,
            ntest: meta[3] as usize,
            r_y: meta[4] as usize,
            r_z: meta[5] as usize,
            acs: meta[6] as usize,
            seed: meta[7],
            shear: meta[8] as i64,
            sigma: *sigma.first().ok_or_else(|| FormatError::Malformed("empty sigma".into()))?,
        };
        let n = config.n;
        let (_, maps) = src.complex("coils")?;
        let coils = Arc::new(CoilSensitivities::new(config.coils, n, n, maps.to_vec())?);
        let (_, mask) = src.bools("omega")?;
        let (_, acs) = src.u64s("omega_acs")?;
        if acs.len() != 2 {
            return Err(FormatError::Malformed("omega_acs must hold 2 values".into()).into());
        }
        let omega = SamplingPattern::new(n, n, mask.to_vec(), AcsBlock { h: acs[0] as usize, w: acs[1] as usize })?;
        let read = |split: &str, count: usize| -> Result<Vec<Case>> {
            (0..count)
                .map(|i| {
                    let (_, img) = src.complex(&format!("{split}/{i}/image"))?;
                    let (_, k) = src.complex(&format!("{split}/{i}/kspace"))?;
                    let image = ComplexImage::new(n, n, img.to_vec())?;
                    let y_ref = KSpaceSample::new(config.coils, k.to_vec(), SamplingPattern::full(n, n), 1.0)?;
                    let y_omega = y_ref.restrict(&omega)?;
                    Ok(Case { image, y_ref, y_omega })
                })
                .collect()
        };
        let train = read("train", config.ntrain)?;
        let test = read("test", config.ntest)?;
        Ok(Self { config, coils, omega, train, test })
    }
}

/// Normalize `y` by its max magnitude, reconstruct, and undo the scaling.
pub fn reconstruct_case(
    y_omega: &KSpaceSample,
    coils: &CoilSensitivities,
    params: &NetworkParams,
    unroll: &UnrollConfig,
) -> Result<ComplexImage> {
    let f = y_omega.max_abs();
    if f == 0.0 {
        return Err(Error::Normalization("test k-space is identically zero".into()));
    }
    reconstruct_test(&y_omega.normalized_by(f), coils, params, unroll)
}

pub fn cg_sense_case(y_omega: &KSpaceSample, coils: &CoilSensitivities) -> Result<ComplexImage> {
    let f = y_omega.max_abs();
    if f == 0.0 {
        return Err(Error::Normalization("test k-space is identically zero".into()));
    }
    let cfg = UnrollConfig { cg_iters: CG_SENSE_ITERS, ..UnrollConfig::default() };
    Ok(cg_sense(&y_omega.normalized_by(f), coils, CG_SENSE_L2, &cfg)?.scaled(f))
}

/// Metrics of a trained network on the test cases, against the ground truth.
pub fn evaluate_params(data: &BenchmarkData, params: &NetworkParams, unroll: &UnrollConfig) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for case in &data.test {
        let rec = reconstruct_case(&case.y_omega, &data.coils, params, unroll)?;
        report.push(&case.image, &rec)?;
    }
    Ok(report)
}

pub fn evaluate_recons(data: &BenchmarkData, recons: &[ComplexImage]) -> Result<MetricReport> {
    if recons.len() != data.test.len() {
        return Err(Error::dim(format!("{} reconstructions for {} test cases", recons.len(), data.test.len())));
    }
    let mut report = MetricReport::default();
    for (case, rec) in data.test.iter().zip(recons) {
        report.push(&case.image, rec)?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    CgSense,
    Supervised,
    Ssdu,
    MultiMask,
    MultiMaskGaussian,
    CyclicMultiMask,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::CgSense,
        Method::Supervised,
        Method::Ssdu,
        Method::MultiMask,
        Method::MultiMaskGaussian,
        Method::CyclicMultiMask,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CgSense => "cgsense",
            Method::Supervised => "supervised",
            Method::Ssdu => "ssdu",
            Method::MultiMask => "multimask",
            Method::MultiMaskGaussian => "multimask-gaussian",
            Method::CyclicMultiMask => "cyclic",
        }
    }

    /// Training config for this method derived from `base`; `None` for
    /// CG-SENSE.
    pub fn train_config(&self, base: &TrainConfig) -> Option<TrainConfig> {
        let mode = match self {
            Method::CgSense => return None,
            Method::Supervised => TrainMode::Supervised,
            Method::Ssdu => TrainMode::Ssdu,
            Method::MultiMask | Method::MultiMaskGaussian => TrainMode::MultiMask,
            Method::CyclicMultiMask => TrainMode::CyclicMultiMask,
        };
        let dist = match self {
            Method::MultiMaskGaussian => MaskDistribution::gaussian(),
            _ => MaskDistribution::UniformRandom,
        };
        Some(TrainConfig { mode, dist, ..*base })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

/// Train (unless CG-SENSE) and evaluate one method.
pub fn run_method(data: &BenchmarkData, method: Method, base: &TrainConfig) -> Result<MetricReport> {
    match method.train_config(base) {
        None => {
            let recons = data
                .test
                .iter()
                .map(|c| cg_sense_case(&c.y_omega, &data.coils))
                .collect::<Result<Vec<_>>>()?;
            evaluate_recons(data, &recons)
        }
        Some(cfg) => run_config(data, &cfg),
    }
}

pub fn run_config(data: &BenchmarkData, cfg: &TrainConfig) -> Result<MetricReport> {
    let samples = data.training_samples()?;
    let out = train(&samples, cfg)?;
    evaluate_params(data, &out.params, &cfg.unroll)
}

/// One row of a comparison or sweep table.
#[derive(Clone, Debug)]
pub struct Entry {
    pub label: String,
    pub result: std::result::Result<MetricReport, String>,
}

pub fn compare_methods(data: &BenchmarkData, methods: &[Method], base: &TrainConfig) -> Vec<Entry> {
    methods
        .iter()
        .map(|m| Entry { label: m.as_str().to_string(), result: run_method(data, *m, base).map_err(|e| e.to_string()) })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Rho,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "K" => Ok(SweepAxis::K),
            "rho" => Ok(SweepAxis::Rho),
            other => Err(Error::config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: TrainConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep needs at least one value"));
        }
        if self.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::config("sweep values must be sorted"));
        }
        Ok(())
    }

    /// Training config at one sweep value. K sweeps train multi-mask SSDU
    /// (K = 1 is single-mask SSDU); rho sweeps keep the base mode.
    pub fn config_at(&self, value: f64) -> Result<TrainConfig> {
        match self.axis {
            SweepAxis::K => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!("K must be a positive integer, got {value}")));
                }
                Ok(TrainConfig { mode: TrainMode::MultiMask, k: value as usize, ..self.base })
            }
            SweepAxis::Rho => Ok(TrainConfig { rho: value, ..self.base }),
        }
    }
}

/// One trained model per sweep value; failures are recorded per value.
pub fn run_sweep(data: &BenchmarkData, cfg: &SweepConfig) -> Result<Vec<Entry>> {
    cfg.validate()?;
    Ok(cfg
        .values
        .iter()
        .map(|&v| Entry {
            label: format_float(v),
            result: cfg.config_at(v).and_then(|c| run_config(data, &c)).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Shortest representation that parses back to the same value.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

/// 17 significant digits.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TABLE_HEADER: [&str; 11] = [
    "label",
    "status",
    "median_nmse",
    "q25_nmse",
    "q75_nmse",
    "mean_nmse",
    "median_ssim",
    "q25_ssim",
    "q75_ssim",
    "mean_ssim",
    "count",
];

pub fn write_table(out: impl Write, label_name: &str, entries: &[Entry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Output(format!("writing CSV: {e}"));
    let mut header = TABLE_HEADER.to_vec();
    header[0] = label_name;
    w.write_record(&header).map_err(io)?;
    for e in entries {
        let row: Vec<String> = match &e.result {
            Ok(r) => {
                let n: Summary = r.nmse_summary()?;
                let s: Summary = r.ssim_summary()?;
                let mut row = vec![e.label.clone(), "ok".to_string()];
                row.extend([n.median, n.q25, n.q75, n.mean, s.median, s.q25, s.q75, s.mean].map(format_full));
                row.push(r.nmse.len().to_string());
                row
            }
            Err(msg) => {
                let mut row = vec![e.label.clone(), format!("error: {msg}")];
                row.extend(std::iter::repeat(String::new()).take(9));
                row
            }
        };
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Output(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Per-slice metrics followed by median / quartile rows.
pub fn write_report(out: impl Write, report: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Output(format!("writing CSV: {e}"));
    w.write_record(["slice", "nmse", "ssim"]).map_err(io)?;
    for (i, (n, s)) in report.nmse.iter().zip(&report.ssim).enumerate() {
        w.write_record([i.to_string(), format_full(*n), format_full(*s)]).map_err(io)?;
    }
    let (n, s) = (report.nmse_summary()?, report.ssim_summary()?);
    for (name, a, b) in [("median", n.median, s.median), ("q25", n.q25, s.q25), ("q75", n.q75, s.q75), ("mean", n.mean, s.mean)] {
        w.write_record([name.to_string(), format_full(a), format_full(b)]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Output(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Parameters plus the unroll settings needed to run them.
pub fn checkpoint_to_container(params: &NetworkParams, unroll: &UnrollConfig) -> Result<DatasetContainer> {
    let mut c = DatasetContainer::new();
    let arch = params.arch();
    c.push("arch", &[2], RecordData::U64(vec![arch.channels as u64, arch.blocks as u64]))?;
    c.push("unroll", &[2], RecordData::U64(vec![unroll.t_unroll as u64, unroll.cg_iters as u64]))?;
    c.push("unroll_real", &[2], RecordData::F64(vec![unroll.cg_tol, unroll.mu_init]))?;
    c.push("mu_trainable", &[1], RecordData::Bool(vec![params.mu_trainable]))?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        c.push(format!("param/{name}"), t.shape(), RecordData::F64(t.data().to_vec()))?;
    }
    Ok(c)
}

pub fn checkpoint_from_container(c: &DatasetContainer) -> Result<(NetworkParams, UnrollConfig)> {
    let (_, arch) = c.u64s("arch")?;
    let (_, unroll) = c.u64s("unroll")?;
    let (_, real) = c.f64s("unroll_real")?;
    let (_, trainable) = c.bools("mu_trainable")?;
    if arch.len() != 2 || unroll.len() != 2 || real.len() != 2 || trainable.len() != 1 {
        return Err(FormatError::Malformed("checkpoint header records have the wrong length".into()).into());
    }
    let arch = ResNetArch { channels: arch[0] as usize, blocks: arch[1] as usize };
    let names = NetworkParams::slot_names(&arch);
    let tensors = names
        .iter()
        .map(|name| {
            let (dims, v) = c.f64s(&format!("param/{name}"))?;
            Tensor::new(dims.iter().map(|&d| d as usize).collect(), v.to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let params = NetworkParams::from_tensors(arch, tensors, trainable[0])?;
    let unroll = UnrollConfig {
        t_unroll: unroll[0] as usize,
        cg_iters: unroll[1] as usize,
        cg_tol: real[0],
        mu_init: real[1],
        mu_trainable: trainable[0],
    };
    Ok((params, unroll))
}

pub fn recons_to_container(recons: &[ComplexImage]) -> Result<DatasetContainer> {
    let mut c = DatasetContainer::new();
    c.push("count", &[1], RecordData::U64(vec![recons.len() as u64]))?;
    for (i, r) in recons.iter().enumerate() {
        let (ny, nz) = r.shape();
        c.push(format!("recon/{i}"), &[ny, nz], RecordData::Complex(r.data().to_vec()))?;
    }
    Ok(c)
}

pub fn recons_from_container(c: &DatasetContainer) -> Result<Vec<ComplexImage>> {
    let (_, count) = c.u64s("count")?;
    let count = *count.first().ok_or_else(|| FormatError::Malformed("empty count".into()))?;
    (0..count)
        .map(|i| {
            let (dims, v) = c.complex(&format!("recon/{i}"))?;
            if dims.len() != 2 {
                return Err(FormatError::Malformed(format!("recon/{i} must be 2-D")).into());
            }
            ComplexImage::new(dims[0] as usize, dims[1] as usize, v.to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchmarkConfig {
        BenchmarkConfig { n: 16, coils: 2, ntrain: 2, ntest: 2, acs: 4, ..BenchmarkConfig::default() }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            lr: 1e-3,
            k: 2,
            unroll: UnrollConfig { t_unroll: 1, cg_iters: 3, ..UnrollConfig::default() },
            arch: ResNetArch { channels: 2, blocks: 1 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn benchmark_is_deterministic_and_round_trips() {
        let a = generate_benchmark(&tiny()).unwrap();
        assert_eq!(a, generate_benchmark(&tiny()).unwrap());
        let c = a.to_container().unwrap();
        let back = BenchmarkData::from_container(&crate::container::DatasetContainer::from_bytes(&c.to_bytes()).unwrap())
            .unwrap();
        assert_eq!(back, a);
        assert_ne!(a.train[0].image, a.train[1].image);
        assert_ne!(a.train[0].image, a.test[0].image);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = NetworkParams::init(ResNetArch { channels: 3, blocks: 2 }, 0.07, 5);
        let u = UnrollConfig { t_unroll: 4, cg_iters: 7, cg_tol: 1e-5, mu_init: 0.07, mu_trainable: true };
        let c = checkpoint_to_container(&p, &u).unwrap();
        let (p2, u2) = checkpoint_from_container(&c).unwrap();
        assert_eq!(p2, p);
        assert_eq!(u2, u);
    }

    #[test]
    fn methods_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("magic".parse::<Method>().is_err());
    }

    #[test]
    fn cg_sense_improves_on_zero_filled() {
        let data = generate_benchmark(&BenchmarkConfig { n: 32, coils: 4, ntrain: 1, ntest: 2, ..BenchmarkConfig::default() }).unwrap();
        for case in &data.test {
            let zf = crate::kspace::zero_filled_recon(&case.y_omega, &data.coils).unwrap();
            let cg = cg_sense_case(&case.y_omega, &data.coils).unwrap();
            let e_zf = crate::metrics::nmse(&case.image, &zf).unwrap();
            let e_cg = crate::metrics::nmse(&case.image, &cg).unwrap();
            assert!(e_cg < e_zf, "cg {e_cg} vs zero-filled {e_zf}");
        }
    }

    #[test]
    fn duplicate_sweep_values_give_identical_reports() {
        let data = generate_benchmark(&tiny()).unwrap();
        let cfg = SweepConfig { axis: SweepAxis::Rho, values: vec![0.4, 0.4], base: TrainConfig { mode: TrainMode::Ssdu, ..tiny_train() } };
        let out = run_sweep(&data, &cfg).unwrap();
        assert_eq!(out[0].result.as_ref().unwrap(), out[1].result.as_ref().unwrap());
    }

    #[test]
    fn sweep_records_failures_without_aborting() {
        let data = generate_benchmark(&tiny()).unwrap();
        let cfg = SweepConfig { axis: SweepAxis::K, values: vec![0.5, 2.0], base: tiny_train() };
        let out = run_sweep(&data, &cfg).unwrap();
        assert!(out[0].result.is_err());
        assert!(out[1].result.is_ok());
        let unsorted = SweepConfig { values: vec![3.0, 2.0], ..cfg };
        assert!(run_sweep(&data, &unsorted).is_err());
    }

    #[test]
    fn table_csv_reparses_exactly() {
        let data = generate_benchmark(&tiny()).unwrap();
        let entries = compare_methods(&data, &[Method::CgSense, Method::Ssdu], &tiny_train());
        let mut buf = Vec::new();
        write_table(&mut buf, "method", &entries).unwrap();
        let mut rdr = csv::Reader::from_reader(&buf[..]);
        assert_eq!(rdr.headers().unwrap().get(0), Some("method"));
        for (rec, e) in rdr.records().zip(&entries) {
            let rec = rec.unwrap();
            let r = e.result.as_ref().unwrap();
            let n = r.nmse_summary().unwrap();
            let s = r.ssim_summary().unwrap();
            assert_eq!(&rec[0], e.label);
            assert_eq!(rec[2].parse::<f64>().unwrap(), n.median);
            assert_eq!(rec[3].parse::<f64>().unwrap(), n.q25);
            assert_eq!(rec[5].parse::<f64>().unwrap(), n.mean);
            assert_eq!(rec[6].parse::<f64>().unwrap(), s.median);
            assert_eq!(rec[9].parse::<f64>().unwrap(), s.mean);
        }
    }

    #[test]
    fn report_csv_reparses_exactly() {
        let report = MetricReport { nmse: vec![0.1, 1.0 / 3.0], ssim: vec![0.9, 2.0 / 3.0] };
        let mut buf = Vec::new();
        write_report(&mut buf, &report).unwrap();
        let mut rdr = csv::Reader::from_reader(&buf[..]);
        let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(rows[1][2].parse::<f64>().unwrap(), 2.0 / 3.0);
        assert_eq!(&rows[2][0], "median");
    }
}

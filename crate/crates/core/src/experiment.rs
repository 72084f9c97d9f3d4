//! The baseline matrix: every selected baseline × client × split seed.
//!
//! Layout of `out_dir`:
//!
//! ```text
//! results/results.csv   one row per evaluated cell
//! results/summary.md    mean ± std table and gains
//! results/gains.csv
//! logs/seed<k>/…        round, bootstrap and supervised training logs
//! checkpoints/…         only with fed.ckpt_every
//! ```
//!
//! Everything under `results/` is a pure function of the config; wall-clock
//! timings only appear under `logs/`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bgrl::ONLINE;
use crate::bundle_io::load_bundle;
use crate::config::{Baseline, Budget, DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{finetune_eval, freeze_eval, score, FreezeResult};
use crate::federation::{
    run_federation, run_federation_with, write_bgrl_csv, write_round_csv, write_supervised_csv,
    ClientState, FedConfig, FedOutcome, LrSchedule, Protocol, ENCODER,
};
use crate::graph::{split_nodes, GraphBundle, Split};
use crate::nn::{AdamWConfig, GcnEncoder};
use crate::report::{sort_records, write_report, EvalRecord, Summary};
use crate::seed::{self, purpose};
use crate::synth::generate_synthetic;

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub records: Vec<EvalRecord>,
    /// One line per cell that could not be produced.
    pub failures: Vec<String>,
    pub summary: Summary,
}

pub fn load_clients(cfg: &ExperimentConfig) -> Result<Vec<GraphBundle>> {
    match &cfg.data {
        DataSource::Bundles(dirs) => dirs.iter().map(|d| load_bundle(d)).collect(),
        DataSource::Synthetic { spec, seed } => generate_synthetic(spec, *seed),
    }
}

/// Loads the clients named by `cfg` and runs the matrix.
pub fn run_baseline_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutcome> {
    cfg.validate()?;
    let bundles = load_clients(cfg)?;
    run_matrix_on(&bundles, cfg)
}

pub fn run_matrix_on(bundles: &[GraphBundle], cfg: &ExperimentConfig) -> Result<MatrixOutcome> {
    cfg.validate()?;
    if bundles.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    let f = bundles[0].feature_dim();
    if let Some(b) = bundles.iter().find(|b| b.feature_dim() != f) {
        return Err(Error::Shape(format!(
            "client {} has feature dim {}, expected {f}",
            b.name,
            b.feature_dim()
        )));
    }
    std::fs::create_dir_all(cfg.out_dir.join("logs"))?;
    std::fs::write(cfg.out_dir.join("logs").join("config.txt"), format!("{cfg:#?}\n"))?;

    let per_seed: Vec<(Vec<EvalRecord>, Vec<String>)> = (0..cfg.num_split_seeds)
        .into_par_iter()
        .map(|s| SeedRun::new(cfg, bundles, s).run())
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_seed {
        records.extend(r);
        failures.extend(f);
    }
    sort_records(&mut records);
    let summary = write_report(&cfg.out_dir.join("results"), &records, &failures)?;
    Ok(MatrixOutcome {
        records,
        failures,
        summary,
    })
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    bundles: &'a [GraphBundle],
    seed_index: usize,
    /// Seed shared by every training run of this split seed, so all
    /// baselines start from the same encoder.
    run_seed: u64,
    splits: Vec<std::result::Result<Split, String>>,
    split_label: String,
    log_dir: PathBuf,
    records: Vec<EvalRecord>,
    failures: Vec<String>,
}

impl<'a> SeedRun<'a> {
    fn new(cfg: &'a ExperimentConfig, bundles: &'a [GraphBundle], s: usize) -> Self {
        let splits = bundles
            .iter()
            .enumerate()
            .map(|(c, b)| {
                let split_seed = seed::derive_seed(cfg.master_seed, &[purpose::SPLIT, s as u64, c as u64]);
                split_nodes(b.num_nodes(), cfg.split, split_seed).map_err(|e| format!("{}: {e}", b.name))
            })
            .collect();
        let (a, b, c) = cfg.split;
        let pct = |x: f64| format!("{}", (x * 100.0).round());
        Self {
            cfg,
            bundles,
            seed_index: s,
            run_seed: seed::derive_seed(cfg.master_seed, &[s as u64]),
            splits,
            split_label: format!("{}/{}/{}", pct(a), pct(b), pct(c)),
            log_dir: cfg.out_dir.join("logs").join(format!("seed{s}")),
            records: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn split(&self, c: usize) -> Result<&Split> {
        self.splits[c].as_ref().map_err(|e| Error::InvalidSplit(e.clone()))
    }

    fn wants(&self, b: Baseline) -> bool {
        self.cfg.baselines.contains(&b)
    }

    fn record(&mut self, client: usize, baseline: Baseline, f1: f64, selected: String) {
        self.records.push(EvalRecord {
            client: self.bundles[client].name.clone(),
            baseline: baseline.name().to_string(),
            seed: self.seed_index,
            split: self.split_label.clone(),
            f1_micro: f1,
            selected_strength_or_steps: selected,
        });
    }

    fn fail(&mut self, what: &str, err: &Error) {
        let line = format!("seed {} {what}: {err}", self.seed_index);
        log::error!("{line}");
        self.failures.push(line);
    }

    fn fed_config(&self, protocol: Protocol, budget: &Budget, cell: &str) -> FedConfig {
        let cfg = self.cfg;
        FedConfig {
            protocol,
            rounds: budget.rounds,
            warmup_rounds: budget.warmup_rounds,
            local_epochs: cfg.local_epochs,
            weighting: cfg.weighting,
            lambda: cfg.lambda.clone(),
            participation: cfg.participation,
            seed: self.run_seed,
            optimizer: AdamWConfig::new(budget.lr, budget.wd),
            lr_schedule: if protocol.is_self_supervised() {
                LrSchedule::Cosine
            } else {
                LrSchedule::Constant
            },
            model: cfg.model.clone(),
            aug: cfg.aug,
            ckpt_every: cfg.ckpt_every,
            ckpt_dir: cfg.ckpt_every.map(|_| {
                cfg.out_dir
                    .join("checkpoints")
                    .join(format!("seed{}", self.seed_index))
                    .join(cell)
            }),
        }
    }

    /// Clients `ids` (global indices) for one training run.
    fn clients(&self, ids: &[usize], fed: &FedConfig) -> Result<Vec<ClientState>> {
        ids.iter()
            .map(|&c| {
                let split = self.split(c)?;
                ClientState::new(c, self.bundles[c].clone(), &split.train_ids, fed)
            })
            .collect()
    }

    fn write_logs(&self, cell: &str, protocol: Protocol, out: &FedOutcome) -> Result<()> {
        std::fs::create_dir_all(&self.log_dir)?;
        let file = |suffix: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(self.log_dir.join(format!("{cell}.{suffix}.csv")))?))
        };
        write_round_csv(&out.logs, protocol, file("rounds")?)?;
        if protocol.is_self_supervised() {
            write_bgrl_csv(&out.logs, file("bgrl")?)?;
        }
        if protocol != Protocol::FedSelfLp1 {
            write_supervised_csv(&out.logs, file("supervised")?)?;
        }
        Ok(())
    }

    fn run(mut self) -> Result<(Vec<EvalRecord>, Vec<String>)> {
        log::info!("split seed {} (run seed {:#x})", self.seed_index, self.run_seed);
        let all: Vec<usize> = (0..self.bundles.len()).collect();

        if self.wants(Baseline::NoFedRandInit) {
            let enc_rng = &mut seed::stream(self.run_seed, &[purpose::ENCODER_INIT]);
            let enc = GcnEncoder::init(self.bundles[0].feature_dim(), self.cfg.model.hidden, enc_rng);
            self.evaluate_self(&all, &enc, Baseline::NoFedRandInit, None);
        }

        if self.wants(Baseline::FedSelfFreeze) || self.wants(Baseline::FedSelfFinetune) {
            match self.train_self("fed_self", &all) {
                Ok(enc) => self.evaluate_self(
                    &all,
                    &enc,
                    Baseline::FedSelfFreeze,
                    Some(Baseline::FedSelfFinetune),
                ),
                Err(e) => self.fail("Fed-Self training", &e),
            }
        }

        if self.wants(Baseline::NoFedSelfFreeze) || self.wants(Baseline::NoFedSelfFinetune) {
            let trained: Vec<Result<GcnEncoder>> = all
                .par_iter()
                .map(|&c| self.train_self(&format!("no_fed_self_client{c}"), &[c]))
                .collect();
            for (c, enc) in trained.into_iter().enumerate() {
                match enc {
                    Ok(enc) => self.evaluate_self(
                        &[c],
                        &enc,
                        Baseline::NoFedSelfFreeze,
                        Some(Baseline::NoFedSelfFinetune),
                    ),
                    Err(e) => self.fail(&format!("No-Fed-Self training, client {c}"), &e),
                }
            }
        }

        if self.wants(Baseline::FedSup) {
            match self.train_sup("fed_sup", &all) {
                Ok(best) => {
                    for (c, (f1, round)) in all.iter().zip(best) {
                        self.record(*c, Baseline::FedSup, f1, round.to_string());
                    }
                }
                Err(e) => self.fail("Fed-Sup", &e),
            }
        }

        if self.wants(Baseline::NoFedSup) {
            let trained: Vec<Result<Vec<(f64, usize)>>> = all
                .par_iter()
                .map(|&c| self.train_sup(&format!("no_fed_sup_client{c}"), &[c]))
                .collect();
            for (c, best) in trained.into_iter().enumerate() {
                match best {
                    Ok(best) => self.record(c, Baseline::NoFedSup, best[0].0, best[0].1.to_string()),
                    Err(e) => self.fail(&format!("No-Fed-Sup, client {c}"), &e),
                }
            }
        }

        Ok((self.records, self.failures))
    }

    /// Trains the self-supervised protocol on `ids` and returns the final
    /// global online encoder.
    fn train_self(&self, cell: &str, ids: &[usize]) -> Result<GcnEncoder> {
        let fed = self.fed_config(self.cfg.self_protocol, &self.cfg.self_budget, cell);
        let mut clients = self.clients(ids, &fed)?;
        let out = run_federation(&mut clients, &fed)?;
        self.write_logs(cell, fed.protocol, &out)?;
        GcnEncoder::from_params(&out.shared.strip_prefix(ONLINE))
    }

    /// Freeze (and optionally finetune) evaluation of `enc` on `ids`.
    fn evaluate_self(&mut self, ids: &[usize], enc: &GcnEncoder, freeze: Baseline, finetune: Option<Baseline>) {
        for &c in ids {
            let split = match self.split(c) {
                Ok(s) => s.clone(),
                Err(e) => {
                    self.fail(&format!("split, client {c}"), &e);
                    continue;
                }
            };
            if self.wants(freeze) {
                let res: Result<FreezeResult> = freeze_eval(enc, &self.bundles[c], &split, &self.cfg.eval);
                match res {
                    Ok(r) => self.record(c, freeze, r.test_f1, format!("C={}", r.selected_c)),
                    Err(e) => self.fail(&format!("{freeze}, client {c}"), &e),
                }
            }
            if let Some(ft) = finetune.filter(|&b| self.wants(b)) {
                let mut rng = seed::stream(self.run_seed, &[purpose::EVAL, c as u64]);
                match finetune_eval(enc, &self.bundles[c], &split, &self.cfg.eval, &mut rng) {
                    Ok(r) => self.record(c, ft, r.test_f1, format!("steps={}", r.selected_step)),
                    Err(e) => self.fail(&format!("{ft}, client {c}"), &e),
                }
            }
        }
    }

    /// Supervised federation on `ids`; per client, the test F1 of the round
    /// with the best validation F1 (global encoder + local head), and that
    /// round (1-based).
    fn train_sup(&self, cell: &str, ids: &[usize]) -> Result<Vec<(f64, usize)>> {
        let fed = self.fed_config(Protocol::FedSup, &self.cfg.sup_budget, cell);
        let mut clients = self.clients(ids, &fed)?;
        let parts: Vec<(Vec<usize>, Vec<usize>)> = ids
            .iter()
            .map(|&c| {
                let split = self.split(c)?;
                let b = &self.bundles[c];
                let (val, test) = (b.labeled_subset(&split.val_ids), b.labeled_subset(&split.test_ids));
                if val.is_empty() || test.is_empty() {
                    return Err(Error::Invalid(format!("{} has no labeled val/test nodes", b.name)));
                }
                Ok((val, test))
            })
            .collect::<Result<_>>()?;
        let mut best: Vec<Option<(f64, f64, usize)>> = vec![None; ids.len()];

        let out = run_federation_with(&mut clients, &fed, |log, shared, clients| {
            let enc = GcnEncoder::from_params(&shared.strip_prefix(ENCODER))?;
            for &i in &log.participants {
                let c = &clients[i];
                let head = c.head.as_ref().expect("supervised clients have heads");
                let (val, test) = &parts[i];
                let val_f1 = score(&enc, head, &c.adj, &c.bundle, val)?;
                if best[i].is_none_or(|(v, _, _)| val_f1 > v) {
                    let test_f1 = score(&enc, head, &c.adj, &c.bundle, test)?;
                    best[i] = Some((val_f1, test_f1, log.round + 1));
                }
            }
            Ok(())
        })?;
        self.write_logs(cell, Protocol::FedSup, &out)?;
        best.into_iter()
            .zip(ids)
            .map(|(b, &c)| {
                b.map(|(_, t, r)| (t, r))
                    .ok_or_else(|| Error::Invalid(format!("client {c} never participated")))
            })
            .collect()
    }
}

/// Paths of the deterministic result files of a finished run.
pub fn result_files(out_dir: &Path) -> [PathBuf; 3] {
    let r = out_dir.join("results");
    [r.join("results.csv"), r.join("summary.md"), r.join("gains.csv")]
}

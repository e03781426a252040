//! Parameterized clustering method specifications.
//!
//! A `MethodSpec` pairs a method with everything it needs to run, so the
//! benchmark and the command line can hold one list that covers both the
//! parameterless algorithms and the tuned ones.

use serde::{Deserialize, Serialize};

use crate::cluster::{
    cluster_bounded, cluster_exact_coord, cluster_grid, cluster_trivial, Method, SiteClustering,
};
use crate::clustgeo::cluster_clustgeo;
use crate::dbsc::cluster_dbsc;
use crate::error::Result;
use crate::ingest::{format_f64, Checklist};
use crate::seed::derive_seed;
use crate::tune::{
    bayes_opt_clustgeo, TuneResult, DEFAULT_ALPHA_RANGE, DEFAULT_ITERATIONS, DEFAULT_LAMBDA_RANGE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MethodSpec {
    Svs,
    OnePerUl,
    LatLong,
    TwoToTen,
    TwoToTenSameObs,
    Rounded4,
    OneKmSq,
    ClustGeo {
        alpha: f64,
        lambda: f64,
    },
    BayesOptClustGeo {
        iterations: usize,
        alpha_range: [f64; 2],
        lambda_range: [f64; 2],
    },
    Dbsc,
}

impl MethodSpec {
    /// Specs for all ten methods with their customary parameters.
    pub fn all_default() -> Vec<MethodSpec> {
        Method::ALL.iter().map(|&m| MethodSpec::of(m)).collect()
    }

    /// The spec a bare method name denotes.
    pub fn of(method: Method) -> MethodSpec {
        match method {
            Method::Svs => MethodSpec::Svs,
            Method::OnePerUl => MethodSpec::OnePerUl,
            Method::LatLong => MethodSpec::LatLong,
            Method::TwoToTen => MethodSpec::TwoToTen,
            Method::TwoToTenSameObs => MethodSpec::TwoToTenSameObs,
            Method::Rounded4 => MethodSpec::Rounded4,
            Method::OneKmSq => MethodSpec::OneKmSq,
            Method::ClustGeo => MethodSpec::ClustGeo {
                alpha: 0.25,
                lambda: 80.0,
            },
            Method::BayesOptClustGeo => MethodSpec::BayesOptClustGeo {
                iterations: DEFAULT_ITERATIONS,
                alpha_range: DEFAULT_ALPHA_RANGE,
                lambda_range: DEFAULT_LAMBDA_RANGE,
            },
            Method::Dbsc => MethodSpec::Dbsc,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            MethodSpec::Svs => Method::Svs,
            MethodSpec::OnePerUl => Method::OnePerUl,
            MethodSpec::LatLong => Method::LatLong,
            MethodSpec::TwoToTen => Method::TwoToTen,
            MethodSpec::TwoToTenSameObs => Method::TwoToTenSameObs,
            MethodSpec::Rounded4 => Method::Rounded4,
            MethodSpec::OneKmSq => Method::OneKmSq,
            MethodSpec::ClustGeo { .. } => Method::ClustGeo,
            MethodSpec::BayesOptClustGeo { .. } => Method::BayesOptClustGeo,
            MethodSpec::Dbsc => Method::Dbsc,
        }
    }

    /// Display label; fixed clustGeo carries its parameters, e.g.
    /// "clustGeo-25-80" for alpha 0.25, lambda 80.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::ClustGeo { alpha, lambda } => format!(
                "clustGeo-{}-{}",
                format_f64(alpha * 100.0),
                format_f64(*lambda)
            ),
            other => other.method().name().to_string(),
        }
    }

    /// Run the clustering on `cs`.
    ///
    /// Every stochastic method derives its stream from `seed` and the
    /// method slug, so one run seed covers the whole roster. Tuning, when
    /// called for, happens here and its selected pair lands in the
    /// clustering params.
    pub fn run(&self, cs: &[Checklist], seed: u64) -> Result<SiteClustering> {
        let seed = derive_seed(seed, self.method().slug());
        match self {
            MethodSpec::Svs => Ok(cluster_trivial(cs, false, seed)),
            MethodSpec::OnePerUl => Ok(cluster_trivial(cs, true, seed)),
            MethodSpec::LatLong => Ok(cluster_exact_coord(cs, None)),
            MethodSpec::TwoToTen => cluster_bounded(cs, 2, 10, false, seed),
            MethodSpec::TwoToTenSameObs => cluster_bounded(cs, 2, 10, true, seed),
            MethodSpec::Rounded4 => Ok(cluster_exact_coord(cs, Some(4))),
            MethodSpec::OneKmSq => cluster_grid(cs, 1000.0, None),
            MethodSpec::ClustGeo { alpha, lambda } => cluster_clustgeo(cs, *alpha, *lambda, None),
            MethodSpec::BayesOptClustGeo {
                iterations,
                alpha_range,
                lambda_range,
            } => {
                let tuned = bayes_opt_clustgeo(cs, *iterations, *alpha_range, *lambda_range, seed)?;
                let mut sc = cluster_clustgeo(cs, tuned.best_alpha, tuned.best_lambda, None)?;
                sc.method = Method::BayesOptClustGeo;
                sc.params
                    .insert("tune_iterations".into(), iterations.to_string());
                sc.params
                    .insert("tune_fitness".into(), format_f64(tuned.best_fitness()));
                Ok(sc)
            }
            MethodSpec::Dbsc => cluster_dbsc(cs, None),
        }
    }

    /// Like `run`, also returning the tuning trace when one was produced.
    pub fn run_with_tuning(
        &self,
        cs: &[Checklist],
        seed: u64,
    ) -> Result<(SiteClustering, Option<TuneResult>)> {
        if let MethodSpec::BayesOptClustGeo {
            iterations,
            alpha_range,
            lambda_range,
        } = self
        {
            let tune_seed = derive_seed(seed, self.method().slug());
            let tuned =
                bayes_opt_clustgeo(cs, *iterations, *alpha_range, *lambda_range, tune_seed)?;
            let mut sc = cluster_clustgeo(cs, tuned.best_alpha, tuned.best_lambda, None)?;
            sc.method = Method::BayesOptClustGeo;
            sc.params
                .insert("tune_iterations".into(), iterations.to_string());
            sc.params
                .insert("tune_fitness".into(), format_f64(tuned.best_fitness()));
            Ok((sc, Some(tuned)))
        } else {
            Ok((self.run(cs, seed)?, None))
        }
    }
}

//! Two-stage nested imputation: draw M multipliers (the imputation
//! models), apply each to N ignorable imputations, and emit the M x N
//! grid of completed datasets with a record of the draws.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{validate_dataset, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::imputer::{generate_ignorable_set, ImputerConfig};
use crate::mechanism::{
    build_observed_pool, draw_multiplier, transform_imputations, MechanismSpec, TransformStats,
};
use crate::stream::StreamPath;

/// Plan for one nested-imputation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedImputationPlan {
    /// Number of imputation models (multiplier draws); at least 2 so the
    /// between-model variance is estimable.
    pub m_models: usize,
    /// Imputations per model.
    pub n_per_model: usize,
    pub mechanism: MechanismSpec,
    pub imputer: ImputerConfig,
    /// Columns whose imputed cells receive the multiplier.
    pub transform_columns: Vec<String>,
    pub master_seed: u64,
}

impl NestedImputationPlan {
    pub fn validate(&self, d: &LongitudinalDataset) -> Result<()> {
        if self.m_models < 2 {
            return Err(Error::Parameter(format!(
                "nested imputation requires m_models >= 2, got {}",
                self.m_models
            )));
        }
        if self.n_per_model < 1 {
            return Err(Error::Parameter("n_per_model must be >= 1".into()));
        }
        self.mechanism.validate()?;
        self.imputer.validate(d)?;
        for c in &self.transform_columns {
            if !self.imputer.column_order.contains(c) {
                return Err(Error::Config(format!(
                    "transform column '{c}' is not among the imputed columns"
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`nested_impute`]: the grid plus everything needed to audit
/// or rerun it.
#[derive(Debug, Clone)]
pub struct NestedImputationOutput {
    /// Completed datasets laid out model-major: index `m * N + n`.
    pub datasets: Vec<LongitudinalDataset>,
    /// The multiplier drawn for each model, shared by that model's N
    /// datasets.
    pub multipliers: Vec<f64>,
    pub stats: TransformStats,
    /// Missingness of the input, kept so downstream consumers know which
    /// cells were imputed.
    pub original_mask: DMatrix<bool>,
}

/// Run the two-stage procedure.
///
/// Stage one generates exactly `M * N` ignorable imputations; stage two
/// draws one multiplier per model and transforms that model's consecutive
/// block of N imputations with it. No imputation is reused across grid
/// cells, and the whole run is a pure function of the plan (including its
/// seed).
pub fn nested_impute(
    d: &LongitudinalDataset,
    plan: &NestedImputationPlan,
) -> Result<NestedImputationOutput> {
    plan.validate(d)?;
    let report = validate_dataset(d);
    if !report.is_valid() {
        return Err(Error::Data(format!("dataset failed validation: {report}")));
    }

    let root = StreamPath::root(plan.master_seed);
    let total = plan.m_models * plan.n_per_model;
    let ignorable =
        generate_ignorable_set(d, total, &plan.imputer, &root.child("ignorable", 0))?;

    let multipliers: Vec<f64> = (0..plan.m_models)
        .map(|m| {
            let mut rng = root.child("model", m as u64).rng();
            draw_multiplier(&plan.mechanism.dist, &mut rng)
        })
        .collect();

    let pool = build_observed_pool(d, plan.imputer.group_by.as_deref(), &plan.transform_columns)?;
    let original_mask = d.mask().clone();

    let results: Vec<(LongitudinalDataset, TransformStats)> = ignorable
        .into_par_iter()
        .enumerate()
        .map(|(idx, completed)| {
            let k = multipliers[idx / plan.n_per_model];
            transform_imputations(&completed, &original_mask, k, &plan.mechanism, &pool)
        })
        .collect::<Result<_>>()?;

    let mut stats = TransformStats::default();
    let mut datasets = Vec::with_capacity(results.len());
    for (ds, st) in results {
        stats.merge(&st);
        datasets.push(ds);
    }

    Ok(NestedImputationOutput {
        datasets,
        multipliers,
        stats,
        original_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::MultiplierDistribution;
    use crate::simgen::{apply_dropout, generate_complete, TrialGenParams};

    fn small_masked_trial() -> LongitudinalDataset {
        let params = TrialGenParams {
            n_per_arm: 40,
            n_dropouts_per_arm: 25,
            ..TrialGenParams::default()
        };
        let path = StreamPath::root(1001);
        let (d, flags) = generate_complete(&params, &path.child("gen", 0)).unwrap();
        apply_dropout(&d, &flags, &params.drop_hazard, &path.child("drop", 0)).unwrap()
    }

    fn sim_plan(mechanism: MechanismSpec, m: usize, n: usize) -> NestedImputationPlan {
        let order: Vec<String> = (0..5).map(|j| format!("y_t{j}")).collect();
        NestedImputationPlan {
            m_models: m,
            n_per_model: n,
            mechanism,
            imputer: ImputerConfig {
                group_by: Some("tx".into()),
                ..ImputerConfig::new(order.clone())
            },
            transform_columns: order,
            master_seed: 99,
        }
    }

    #[test]
    fn identity_mechanism_leaves_ignorable_imputations_untouched() {
        let d = small_masked_trial();
        let plan = sim_plan(
            MechanismSpec::new(MultiplierDistribution::normal(1.0, 0.0)),
            2,
            1,
        );
        let out = nested_impute(&d, &plan).unwrap();
        assert_eq!(out.datasets.len(), 2);
        assert_eq!(out.multipliers, vec![1.0, 1.0]);

        let ignorable = generate_ignorable_set(
            &d,
            2,
            &plan.imputer,
            &StreamPath::root(plan.master_seed).child("ignorable", 0),
        )
        .unwrap();
        for (a, b) in out.datasets.iter().zip(&ignorable) {
            assert!(a.bitwise_eq(b));
        }
    }

    #[test]
    fn models_share_their_multiplier_and_consume_distinct_imputations() {
        let d = small_masked_trial();
        let plan = sim_plan(
            MechanismSpec::new(MultiplierDistribution::normal(1.3, 0.3)),
            6,
            2,
        );
        let out = nested_impute(&d, &plan).unwrap();
        assert_eq!(out.datasets.len(), 12);
        assert_eq!(out.multipliers.len(), 6);
        // Multiplier spread implies the models genuinely differ.
        let distinct = out
            .multipliers
            .iter()
            .filter(|k| (*k - out.multipliers[0]).abs() > 1e-12)
            .count();
        assert!(distinct > 0);
        // Within a model the two datasets differ only through the
        // ignorable draws, never through k: both must differ somewhere.
        for m in 0..6 {
            let a = &out.datasets[m * 2];
            let b = &out.datasets[m * 2 + 1];
            assert!(!a.bitwise_eq(b), "model {m} reused an imputation");
        }
    }

    #[test]
    fn rerunning_the_plan_is_bit_identical() {
        let d = small_masked_trial();
        let plan = sim_plan(
            MechanismSpec::new(MultiplierDistribution::normal(1.5, 0.5)),
            4,
            2,
        );
        let a = nested_impute(&d, &plan).unwrap();
        let b = nested_impute(&d, &plan).unwrap();
        assert_eq!(a.multipliers, b.multipliers);
        for (x, y) in a.datasets.iter().zip(&b.datasets) {
            assert!(x.bitwise_eq(y));
        }
    }

    #[test]
    fn single_model_plans_are_rejected() {
        let d = small_masked_trial();
        let plan = sim_plan(
            MechanismSpec::new(MultiplierDistribution::normal(1.0, 0.0)),
            1,
            2,
        );
        assert!(matches!(
            nested_impute(&d, &plan),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn transform_columns_must_be_imputed_columns() {
        let d = small_masked_trial();
        let mut plan = sim_plan(
            MechanismSpec::new(MultiplierDistribution::normal(1.0, 0.0)),
            2,
            1,
        );
        plan.transform_columns.push("tx".into());
        assert!(matches!(nested_impute(&d, &plan), Err(Error::Config(_))));
    }
}

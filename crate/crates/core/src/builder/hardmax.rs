use super::collapse::build_collapse;
use super::interpolation::build_interpolation;
use super::leaders::build_leader_selection;
use super::pipeline::Pipeline;
use super::report::ConstructionReport;
use super::separation::build_separation;
use super::VERIFY_TOL;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::hausdorff_distance;
use crate::transformer::Transformer;

/// Block budget left for interpolation given the total bound.
pub(crate) fn remaining(p: &Pipeline, bound: usize) -> Result<usize> {
    bound.checked_sub(p.model.num_blocks()).ok_or_else(|| {
        Error::construction(
            "interpolation",
            format!(
                "{} blocks already exceed the bound {bound}",
                p.model.num_blocks()
            ),
        )
    })
}

/// Re-applies the finished model to the raw inputs and assembles the report.
pub(crate) fn finish(
    p: Pipeline,
    ds: &Dataset<f64>,
    mode: &str,
    bound: usize,
    delta1: f64,
    detours: usize,
) -> Result<(Transformer<f64>, ConstructionReport)> {
    p.model.validate()?;
    let distances: Vec<f64> = ds
        .pairs
        .iter()
        .map(|pair| {
            Ok(hausdorff_distance(
                &p.model.apply(&pair.input)?,
                &pair.output,
            ))
        })
        .collect::<Result<_>>()?;
    if let Some((j, dist)) = distances
        .iter()
        .enumerate()
        .find(|(_, &e)| !(e <= VERIFY_TOL))
    {
        return Err(Error::Verification(format!(
            "sequence {j} is off its target by {dist:e}"
        )));
    }
    let sum_m = ds.total_output_len();
    let num_blocks = p.model.num_blocks();
    if num_blocks > bound {
        return Err(Error::construction(
            "interpolation",
            format!("{num_blocks} blocks exceed the bound {bound}"),
        ));
    }
    let param_count = p.model.param_count();
    let report = ConstructionReport {
        mode: mode.to_string(),
        d: ds.d,
        n_sequences: ds.len(),
        sum_m,
        steps: p.steps,
        num_blocks,
        param_count,
        bound_blocks: bound,
        param_coeff: param_count as f64 / (ds.d * sum_m) as f64,
        max_width: p.model.max_width(),
        delta1,
        detours,
        distances,
        intermediate_states: p.snapshots,
    };
    Ok((p.model, report))
}

/// Builds a hardmax transformer with `L ≤ 2Σm + 2N + 1` blocks mapping every
/// input of `ds` onto its output, as sets.
pub fn build_hardmax(ds: &Dataset<f64>) -> Result<(Transformer<f64>, ConstructionReport)> {
    ds.validate()?;
    let ms = ds.output_lengths();
    let bound = 2 * ds.total_output_len() + 2 * ds.len() + 1;
    let mut p = Pipeline::hardmax(ds.d, ds.inputs());
    let delta1 = build_separation(&mut p)?;
    let (placement, _) = build_leader_selection(&mut p, &ms, false)?;
    build_collapse(&mut p, &placement)?;
    let budget = remaining(&p, bound)?;
    let detours = build_interpolation(&mut p, &ds.outputs(), budget)?;
    finish(p, ds, "hardmax", bound, delta1, detours)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::StepName;
    use crate::token::Sequence;

    fn seq(rows: &[[f64; 2]]) -> Sequence<f64> {
        Sequence::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_sequences_within_bound() {
        let ds = Dataset::new(
            2,
            vec![
                (
                    seq(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                    seq(&[[5.0, 5.0]]),
                ),
                (
                    seq(&[[2.0, 2.0], [3.0, 1.0]]),
                    seq(&[[-1.0, 0.0], [0.0, -1.0]]),
                ),
            ],
        );
        let (t, r) = build_hardmax(&ds).unwrap();
        assert!(r.num_blocks <= 11, "{}", r.num_blocks);
        assert_eq!(r.bound_blocks, 11);
        for pair in &ds.pairs {
            assert!(hausdorff_distance(&t.apply(&pair.input).unwrap(), &pair.output) <= 1e-9);
        }
        assert_eq!(r.blocks_in(StepName::Collapse), 1);
        assert_eq!(r.blocks_in(StepName::LeaderSelection), 4);
    }

    #[test]
    fn shared_tokens_are_separated() {
        let ds = Dataset::new(
            2,
            vec![
                (
                    seq(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.2]]),
                    seq(&[[3.0, 0.0]]),
                ),
                (
                    seq(&[[0.0, 0.0], [1.0, 0.0], [2.0, 2.0]]),
                    seq(&[[0.0, 3.0]]),
                ),
                (
                    seq(&[[0.5, 0.2], [1.0, 1.0], [-1.0, 0.5]]),
                    seq(&[[1.0, 2.0], [2.0, 1.0]]),
                ),
            ],
        );
        let (_, r) = build_hardmax(&ds).unwrap();
        assert!(r.num_blocks <= 15, "{}", r.num_blocks);
        assert!(r.max_distance() <= 1e-9);
        assert!(r.blocks_in(StepName::Separation) <= 5);
    }

    #[test]
    fn single_token_sequence() {
        let ds = Dataset::new(2, vec![(seq(&[[0.3, -0.2]]), seq(&[[4.0, 4.0]]))]);
        let (t, r) = build_hardmax(&ds).unwrap();
        assert!(r.num_blocks <= 5);
        assert!(
            hausdorff_distance(&t.apply(&ds.pairs[0].input).unwrap(), &ds.pairs[0].output) <= 1e-9
        );
    }

    #[test]
    fn output_already_in_place_is_skipped() {
        let ds = Dataset::new(
            2,
            vec![(seq(&[[0.0, 0.0], [1.0, 0.0]]), seq(&[[1.0, 0.0]]))],
        );
        let (_, r) = build_hardmax(&ds).unwrap();
        assert!(r.within_bound());
        assert!(r.max_distance() <= 1e-9);
    }

    #[test]
    fn invalid_dataset_is_rejected() {
        let ds = Dataset::new(
            2,
            vec![(seq(&[[0.0, 0.0]]), seq(&[[1.0, 0.0], [2.0, 0.0]]))],
        );
        assert!(matches!(build_hardmax(&ds), Err(Error::Dataset(_))));
    }
}

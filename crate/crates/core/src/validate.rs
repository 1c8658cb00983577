//! Validity checking for the three coloring semantics: list defective
//! (undirected neighbors), oriented list defective (given orientation) and
//! list arbdefective (orientation produced by the algorithm).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Orientation};
use crate::instance::{Color, Coloring, PaletteInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationMode {
    /// Given input orientation; `x_v` may repeat on at most `d_v(x_v)`
    /// outneighbors.
    Oldc,
    /// Undirected; at most `d_v(x_v)` neighbors share the color.
    ListDefective,
    /// The coloring must carry its own orientation of (at least the
    /// monochromatic) edges; defect counted on outneighbors under it.
    ListArbdefective,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidateError {
    #[error("mode {0:?} requires an orientation but none was given")]
    MissingOrientation(ValidationMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// More same-colored (out)neighbors than the color's defect allows.
    DefectExceeded,
    /// The node is colored with a color outside its list.
    ColorNotInList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: NodeId,
    pub color: Color,
    pub kind: ViolationKind,
    /// Same-colored (out)neighbors observed.
    pub observed: usize,
    /// `d_v(color)`, or 0 for colors outside the list.
    pub allowed: usize,
}

/// Outcome of [`validate`]. Uncolored nodes are reported separately; a
/// partial coloring is not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub uncolored: Vec<NodeId>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_valid_and_total(&self) -> bool {
        self.violations.is_empty() && self.uncolored.is_empty()
    }
}

/// Checks every colored node `v`: its color must come from `L_v` and at most
/// `d_v(x_v)` of its (out)neighbors — in the sense of `mode` — may share it.
pub fn validate(
    graph: &Graph,
    orientation: Option<&Orientation>,
    instance: &PaletteInstance,
    coloring: &Coloring,
    mode: ValidationMode,
) -> Result<ValidationReport, ValidateError> {
    let counting: Option<&Orientation> = match mode {
        ValidationMode::Oldc => {
            Some(orientation.ok_or(ValidateError::MissingOrientation(mode))?)
        }
        ValidationMode::ListArbdefective => Some(
            coloring
                .produced_orientation
                .as_ref()
                .ok_or(ValidateError::MissingOrientation(mode))?,
        ),
        ValidationMode::ListDefective => None,
    };
    let mut violations = Vec::new();
    let mut uncolored = Vec::new();
    for v in 0..graph.n() {
        let x = match coloring.assignment[v] {
            Some(x) => x,
            None => {
                uncolored.push(v);
                continue;
            }
        };
        let same = |others: &[NodeId]| {
            others
                .iter()
                .filter(|&&u| coloring.assignment[u] == Some(x))
                .count()
        };
        let observed = match counting {
            None => same(graph.neighbors(v)),
            Some(o) => same(o.out_neighbors(v)),
        };
        match instance.defect(v, x) {
            None => violations.push(Violation {
                node: v,
                color: x,
                kind: ViolationKind::ColorNotInList,
                observed,
                allowed: 0,
            }),
            Some(d) if observed > d as usize => violations.push(Violation {
                node: v,
                color: x,
                kind: ViolationKind::DefectExceeded,
                observed,
                allowed: d as usize,
            }),
            Some(_) => {}
        }
    }
    Ok(ValidationReport {
        violations,
        uncolored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::monochromatic_neighbor_counts;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn proper_coloring_has_no_violations() {
        let g = triangle();
        let lists = vec![
            vec![(1, 0), (2, 0), (3, 0)];
            3
        ];
        let inst = PaletteInstance::new(&g, 3, lists).unwrap();
        let col = Coloring::total(vec![1, 2, 3]);
        let report = validate(&g, None, &inst, &col, ValidationMode::ListDefective).unwrap();
        assert!(report.is_valid_and_total());
    }

    #[test]
    fn oldc_counts_only_the_out_endpoint() {
        // edge u->v, both colored 5, zero defects: only u sees an outneighbor
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let o = Orientation::from_directed_edges(&g, &[(0, 1)]).unwrap();
        let inst =
            PaletteInstance::new(&g, 5, vec![vec![(5, 0)], vec![(5, 0)]]).unwrap();
        let col = Coloring::total(vec![5, 5]);
        let report = validate(&g, Some(&o), &inst, &col, ValidationMode::Oldc).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].node, 0);
        assert_eq!(report.violations[0].kind, ViolationKind::DefectExceeded);
    }

    #[test]
    fn oldc_mode_requires_an_orientation() {
        let g = triangle();
        let inst = PaletteInstance::new(&g, 1, vec![vec![(1, 2)]; 3]).unwrap();
        let col = Coloring::total(vec![1, 1, 1]);
        assert_eq!(
            validate(&g, None, &inst, &col, ValidationMode::Oldc),
            Err(ValidateError::MissingOrientation(ValidationMode::Oldc))
        );
        assert_eq!(
            validate(&g, None, &inst, &col, ValidationMode::ListArbdefective),
            Err(ValidateError::MissingOrientation(
                ValidationMode::ListArbdefective
            ))
        );
    }

    #[test]
    fn color_not_in_list_is_flagged() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let inst = PaletteInstance::new(&g, 5, vec![vec![(1, 0)]]).unwrap();
        let col = Coloring::total(vec![2]);
        let report = validate(&g, None, &inst, &col, ValidationMode::ListDefective).unwrap();
        assert_eq!(report.violations[0].kind, ViolationKind::ColorNotInList);
    }

    /// Independent recount: random colorings on random graphs, the validator
    /// must agree with a from-scratch enumeration of monochromatic
    /// (out)neighbors.
    #[test]
    fn validator_agrees_with_exhaustive_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = 12;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.3) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(n, &edges).unwrap();
            let o = Orientation::from_ranks(&g, |v| rng.gen::<u8>() as u64 * 251 + v as u64);
            let c_space = 4u64;
            let lists: Vec<Vec<(Color, u32)>> = (0..n)
                .map(|_| {
                    let mut list = Vec::new();
                    for x in 1..=c_space as Color {
                        if rng.gen_bool(0.8) {
                            list.push((x, rng.gen_range(0..3)));
                        }
                    }
                    list
                })
                .collect();
            let inst = PaletteInstance::new(&g, c_space, lists).unwrap();
            let assignment: Vec<Option<Color>> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.85) {
                        Some(rng.gen_range(1..=c_space as Color))
                    } else {
                        None
                    }
                })
                .collect();
            let col = Coloring {
                assignment: assignment.clone(),
                produced_orientation: Some(o.clone()),
            };

            // undirected recount
            let counts = monochromatic_neighbor_counts(&g, &assignment);
            let report =
                validate(&g, None, &inst, &col, ValidationMode::ListDefective).unwrap();
            for v in 0..n {
                let Some(x) = assignment[v] else { continue };
                let bad = match inst.defect(v, x) {
                    None => true,
                    Some(d) => counts[v] > d as usize,
                };
                assert_eq!(
                    bad,
                    report.violations.iter().any(|viol| viol.node == v),
                    "undirected disagreement at node {v}"
                );
            }

            // oriented recount
            let report = validate(&g, Some(&o), &inst, &col, ValidationMode::Oldc).unwrap();
            for v in 0..n {
                let Some(x) = assignment[v] else { continue };
                let out_same = o
                    .out_neighbors(v)
                    .iter()
                    .filter(|&&u| assignment[u] == Some(x))
                    .count();
                let bad = match inst.defect(v, x) {
                    None => true,
                    Some(d) => out_same > d as usize,
                };
                assert_eq!(
                    bad,
                    report.violations.iter().any(|viol| viol.node == v),
                    "oriented disagreement at node {v}"
                );
            }
        }
    }

    /// Outneighbors are a subset of neighbors, so oldc violations are a
    /// subset of list-defective violations for total colorings.
    #[test]
    fn oldc_violations_subset_of_list_defective() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let n = 10;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(n, &edges).unwrap();
            let o = Orientation::from_ranks(&g, |v| v as u64);
            let lists: Vec<Vec<(Color, u32)>> = (0..n)
                .map(|_| (1..=3).map(|x| (x, rng.gen_range(0..2))).collect())
                .collect();
            let inst = PaletteInstance::new(&g, 3, lists).unwrap();
            let col = Coloring::total((0..n).map(|_| rng.gen_range(1..=3)).collect());
            let oldc = validate(&g, Some(&o), &inst, &col, ValidationMode::Oldc).unwrap();
            let ld =
                validate(&g, Some(&o), &inst, &col, ValidationMode::ListDefective).unwrap();
            for viol in &oldc.violations {
                assert!(
                    ld.violations.iter().any(|w| w.node == viol.node),
                    "oldc violation at {} not covered undirected",
                    viol.node
                );
            }
        }
    }

    /// Uncoloring a node never creates new violations elsewhere in the
    /// undirected mode.
    #[test]
    fn validate_is_monotone_under_uncoloring() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = 9;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edges(n, &edges).unwrap();
            let lists: Vec<Vec<(Color, u32)>> = (0..n)
                .map(|_| (1..=3).map(|x| (x, rng.gen_range(0..2))).collect())
                .collect();
            let inst = PaletteInstance::new(&g, 3, lists).unwrap();
            let mut col = Coloring::total((0..n).map(|_| rng.gen_range(1..=3)).collect());
            let before = validate(&g, None, &inst, &col, ValidationMode::ListDefective)
                .unwrap()
                .violations;
            let victim = rng.gen_range(0..n);
            col.assignment[victim] = None;
            let after = validate(&g, None, &inst, &col, ValidationMode::ListDefective)
                .unwrap()
                .violations;
            for viol in &after {
                assert!(
                    before.iter().any(|w| w.node == viol.node),
                    "uncoloring {victim} created a new violation at {}",
                    viol.node
                );
            }
        }
    }
}

//! Bargaining solutions and fairness geometry over the normalized utility space.
//!
//! All functions here are pure. Ties are broken deterministically, and the
//! last resort is always the bid's enumeration index (lower wins).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{NeedsProfile, PartyPair, UtilityPoint};

/// Default number of anchors used to sample the diagonal for the Line of
/// Equal Opportunity.
pub const DEFAULT_LEO_RESOLUTION: usize = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("empty input")]
    EmptyInput,
    #[error("resolution must be at least 2, got {0}")]
    Resolution(usize),
}

/// The Pareto-optimal subset of a point set, ordered by descending `u_H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub points: Vec<UtilityPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayLabel {
    Diagonal,
    BalancedNeeds,
}

/// A ray from the origin with unit-length, strictly positive direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayDescriptor {
    pub direction: [f64; 2],
    pub label: RayLabel,
}

impl RayDescriptor {
    /// Perpendicular distance from `(x, y)` to the line carrying this ray.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let [dx, dy] = self.direction;
        (x * dy - y * dx).abs()
    }
}

/// An outcome-fairness principle and the parameters it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FairnessPrinciple {
    /// Outcome proportional to investments.
    Equity { investments: PartyPair<f64> },
    /// Comparable outcome for all parties.
    Equality,
    /// Outcome proportional to need.
    Need { needs: NeedsProfile },
}

impl FairnessPrinciple {
    pub fn name(&self) -> &'static str {
        match self {
            FairnessPrinciple::Equity { .. } => "equity",
            FairnessPrinciple::Equality => "equality",
            FairnessPrinciple::Need { .. } => "need",
        }
    }

    pub fn needs(&self) -> Option<&NeedsProfile> {
        match self {
            FairnessPrinciple::Need { needs } => Some(needs),
            _ => None,
        }
    }

    /// Rejects non-positive or non-finite investments.
    pub fn validate(&self) -> Result<(), String> {
        if let FairnessPrinciple::Equity { investments } = self {
            for v in [investments.h, investments.p] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("investments must be strictly positive, got {v}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
fn dominates(a: &UtilityPoint, b: &UtilityPoint) -> bool {
    a.u_h() >= b.u_h() && a.u_p() >= b.u_p() && (a.u_h() > b.u_h() || a.u_p() > b.u_p())
}

fn frontier_order(a: &UtilityPoint, b: &UtilityPoint) -> Ordering {
    b.u_h()
        .total_cmp(&a.u_h())
        .then(b.u_p().total_cmp(&a.u_p()))
        .then(a.index.cmp(&b.index))
}

/// Pareto frontier by a sort-and-sweep over descending `u_H`.
///
/// Points with identical coordinates do not dominate each other, so all of
/// them survive when one of them is optimal.
pub fn pareto_frontier(points: &[UtilityPoint]) -> Result<Frontier, AnalyticsError> {
    if points.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let mut sorted: Vec<&UtilityPoint> = points.iter().collect();
    sorted.sort_by(|a, b| frontier_order(a, b));

    let mut kept = Vec::new();
    // best u_P among points with strictly larger u_H
    let mut best_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let h = sorted[i].u_h();
        let group_max = sorted[i].u_p();
        let mut j = i;
        while j < sorted.len() && sorted[j].u_h() == h {
            let q = sorted[j];
            if q.u_p() == group_max && q.u_p() > best_above {
                kept.push(q.clone());
            }
            j += 1;
        }
        best_above = best_above.max(group_max);
        i = j;
    }
    Ok(Frontier { points: kept })
}

/// Frontier member maximizing the minimum coordinate; ties go to the larger
/// coordinate sum, then to the lower bid index.
pub fn egalitarian_point(frontier: &Frontier) -> Result<UtilityPoint, AnalyticsError> {
    frontier
        .points
        .iter()
        .min_by(|a, b| {
            let min_a = a.u_h().min(a.u_p());
            let min_b = b.u_h().min(b.u_p());
            min_b
                .total_cmp(&min_a)
                .then((b.u_h() + b.u_p()).total_cmp(&(a.u_h() + a.u_p())))
                .then(a.index.cmp(&b.index))
        })
        .cloned()
        .ok_or(AnalyticsError::EmptyInput)
}

fn nearest_to(points: &[UtilityPoint], x: f64, y: f64) -> &UtilityPoint {
    points
        .iter()
        .min_by(|a, b| {
            let da = (a.u_h() - x).powi(2) + (a.u_p() - y).powi(2);
            let db = (b.u_h() - x).powi(2) + (b.u_p() - y).powi(2);
            da.total_cmp(&db).then(a.index.cmp(&b.index))
        })
        .expect("nonempty")
}

fn nearest_along_segment(
    points: &[UtilityPoint],
    end: [f64; 2],
    resolution: usize,
) -> Result<Vec<UtilityPoint>, AnalyticsError> {
    if points.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if resolution < 2 {
        return Err(AnalyticsError::Resolution(resolution));
    }
    let mut out: Vec<UtilityPoint> = Vec::new();
    for k in 0..resolution {
        let t = k as f64 / (resolution - 1) as f64;
        let best = nearest_to(points, end[0] * t, end[1] * t);
        if !out.iter().any(|p| p.index == best.index) {
            out.push(best.clone());
        }
    }
    Ok(out)
}

/// Line of Equal Opportunity: for `resolution` equally spaced anchors on the
/// diagonal from the origin to `(1,1)`, the nearest point to each anchor.
/// Returned in order of first appearance, deduplicated by bid.
pub fn line_of_equal_opportunity(
    points: &[UtilityPoint],
    resolution: usize,
) -> Result<Vec<UtilityPoint>, AnalyticsError> {
    nearest_along_segment(points, [1.0, 1.0], resolution)
}

/// Points closest to the balanced-needs ray: anchors run from the origin to
/// where the ray leaves the unit square.
pub fn balanced_needs_points(
    points: &[UtilityPoint],
    needs: &NeedsProfile,
    resolution: usize,
) -> Result<Vec<UtilityPoint>, AnalyticsError> {
    let n = needs.needs();
    let top = n.h.max(n.p);
    nearest_along_segment(points, [n.h / top, n.p / top], resolution)
}

/// Ray on which `u_H / u_P = n_H / n_P`.
pub fn balanced_needs_line(needs: &NeedsProfile) -> RayDescriptor {
    let n = needs.needs();
    let norm = n.h.hypot(n.p);
    RayDescriptor {
        direction: [n.h / norm, n.p / norm],
        label: if n.h == n.p {
            RayLabel::Diagonal
        } else {
            RayLabel::BalancedNeeds
        },
    }
}

/// The diagonal `u_H = u_P` as a ray.
pub fn diagonal() -> RayDescriptor {
    RayDescriptor {
        direction: [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
        label: RayLabel::Diagonal,
    }
}

/// Scales each axis by `n_min / n_p`, which sends the balanced-needs line onto
/// the diagonal and keeps every party's ranking of bids.
pub fn needs_transform(point: &UtilityPoint, needs: &NeedsProfile) -> UtilityPoint {
    let [x, y] = needs_transform_coords(point.coordinates, needs);
    UtilityPoint {
        coordinates: [x, y],
        bid: point.bid.clone(),
        index: point.index,
    }
}

pub fn needs_transform_coords(coords: [f64; 2], needs: &NeedsProfile) -> [f64; 2] {
    let n = needs.needs();
    let min = needs.min_need();
    [coords[0] * (min / n.h), coords[1] * (min / n.p)]
}

/// Distance of `coords` from the target line of `principle`; zero is
/// perfectly fair.
pub fn deviation_at(coords: [f64; 2], principle: &FairnessPrinciple) -> f64 {
    let [h, p] = coords;
    match principle {
        FairnessPrinciple::Equality => (h - p).abs(),
        FairnessPrinciple::Need { needs } => balanced_needs_line(needs).distance(h, p),
        FairnessPrinciple::Equity { investments } => {
            let (ih, ip) = (investments.h, investments.p);
            (h / ih - p / ip).abs() / (1.0 / ih).max(1.0 / ip)
        }
    }
}

pub fn fairness_deviation(point: &UtilityPoint, principle: &FairnessPrinciple) -> f64 {
    deviation_at(point.coordinates, principle)
}

/// Frontier point nearest to the ray from the origin through the ideal point
/// `(max u_H, max u_P)`.
pub fn kalai_smorodinsky_point(points: &[UtilityPoint]) -> Result<UtilityPoint, AnalyticsError> {
    let frontier = pareto_frontier(points)?;
    let max_h = points.iter().map(UtilityPoint::u_h).fold(0.0, f64::max);
    let max_p = points.iter().map(UtilityPoint::u_p).fold(0.0, f64::max);
    let norm = max_h.hypot(max_p);
    let dist = |q: &UtilityPoint| -> f64 {
        if norm == 0.0 {
            return q.u_h().hypot(q.u_p());
        }
        let (dx, dy) = (max_h / norm, max_p / norm);
        let along = q.u_h() * dx + q.u_p() * dy;
        if along < 0.0 {
            q.u_h().hypot(q.u_p())
        } else {
            (q.u_h() * dy - q.u_p() * dx).abs()
        }
    };
    frontier
        .points
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.index.cmp(&b.index)))
        .cloned()
        .ok_or(AnalyticsError::EmptyInput)
}

/// Euclidean distance from `coords` to the nearest member of `set`.
pub fn distance_to_set(coords: [f64; 2], set: &[UtilityPoint]) -> f64 {
    set.iter()
        .map(|q| (q.u_h() - coords[0]).hypot(q.u_p() - coords[1]))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidDeviation {
    pub index: usize,
    pub coordinates: [f64; 2],
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticsView {
    #[default]
    Original,
    NeedsTransformed {
        needs: NeedsProfile,
    },
}

impl AnalyticsView {
    pub fn map(&self, coords: [f64; 2]) -> [f64; 2] {
        match self {
            AnalyticsView::Original => coords,
            AnalyticsView::NeedsTransformed { needs } => needs_transform_coords(coords, needs),
        }
    }
}

/// The fairness analytics of a bid space under one principle and view.
///
/// Geometry (frontier, solution points, LEO) is computed in the view's
/// coordinates; deviations are always measured in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub view: AnalyticsView,
    pub points: Vec<UtilityPoint>,
    pub frontier: Vec<UtilityPoint>,
    pub egalitarian_point: UtilityPoint,
    pub leo: Vec<UtilityPoint>,
    pub lbn_direction: Option<RayDescriptor>,
    pub balanced_needs_points: Vec<UtilityPoint>,
    pub ks_point: UtilityPoint,
    pub deviations: Vec<BidDeviation>,
}

impl AnalyticsReport {
    pub fn compute(
        points: &[UtilityPoint],
        principle: &FairnessPrinciple,
        view: &AnalyticsView,
        resolution: usize,
    ) -> Result<Self, AnalyticsError> {
        let viewed: Vec<UtilityPoint> = points
            .iter()
            .map(|p| UtilityPoint {
                coordinates: view.map(p.coordinates),
                bid: p.bid.clone(),
                index: p.index,
            })
            .collect();
        let frontier = pareto_frontier(&viewed)?;
        let egalitarian_point = egalitarian_point(&frontier)?;
        let leo = line_of_equal_opportunity(&viewed, resolution)?;
        let ks_point = kalai_smorodinsky_point(&viewed)?;
        let (lbn_direction, balanced) = match (principle.needs(), view) {
            (_, AnalyticsView::NeedsTransformed { .. }) => (Some(diagonal()), leo.clone()),
            (Some(needs), AnalyticsView::Original) => (
                Some(balanced_needs_line(needs)),
                balanced_needs_points(&viewed, needs, resolution)?,
            ),
            (None, AnalyticsView::Original) => (None, Vec::new()),
        };
        let deviations = points
            .iter()
            .map(|p| BidDeviation {
                index: p.index,
                coordinates: p.coordinates,
                deviation: fairness_deviation(p, principle),
            })
            .collect();
        Ok(Self {
            view: *view,
            points: viewed,
            frontier: frontier.points,
            egalitarian_point,
            leo,
            lbn_direction,
            balanced_needs_points: balanced,
            ks_point,
            deviations,
        })
    }
}

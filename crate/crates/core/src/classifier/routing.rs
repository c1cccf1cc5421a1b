//! Routing plans: which l of the t padded positions carry real slices.

use super::{ClassifierError, RoutingStrategy};

/// Strictly increasing list of l distinct positions in `[0, t-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingPlan {
    positions: Vec<usize>,
    t: usize,
}

impl RoutingPlan {
    pub fn new(positions: Vec<usize>, t: usize) -> Result<Self, ClassifierError> {
        if positions.is_empty() || positions.len() > t {
            return Err(ClassifierError::BadLength {
                l: positions.len(),
                t,
            });
        }
        for w in positions.windows(2) {
            if w[0] >= w[1] {
                return Err(ClassifierError::BadConfig(
                    "routing positions must strictly increase".into(),
                ));
            }
        }
        if *positions.last().unwrap() >= t {
            return Err(ClassifierError::BadConfig(format!(
                "routing position {} out of range for t={t}",
                positions.last().unwrap()
            )));
        }
        Ok(RoutingPlan { positions, t })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn l(&self) -> usize {
        self.positions.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn contains(&self, position: usize) -> bool {
        self.positions.binary_search(&position).is_ok()
    }
}

fn check_range(t: usize, l: usize) -> Result<(), ClassifierError> {
    if l < 1 || l > t {
        return Err(ClassifierError::BadLength { l, t });
    }
    Ok(())
}

/// Positions `[0, 1, ..., l-1]`.
pub fn plan_first_l(t: usize, l: usize) -> Result<RoutingPlan, ClassifierError> {
    check_range(t, l)?;
    RoutingPlan::new((0..l).collect(), t)
}

/// Positions `round(i * (t-1) / (l-1))` for `i in 0..l` (round half up);
/// `l = 1` maps to `[0]`. Should rounding ever collide, the later index
/// shifts up to the next free slot.
pub fn plan_aligned(t: usize, l: usize) -> Result<RoutingPlan, ClassifierError> {
    check_range(t, l)?;
    if l == 1 {
        return RoutingPlan::new(vec![0], t);
    }
    let mut positions = Vec::with_capacity(l);
    let mut last: Option<usize> = None;
    for i in 0..l {
        let ideal = (i as f64 * (t - 1) as f64 / (l - 1) as f64).round() as usize;
        let p = match last {
            Some(prev) if ideal <= prev => prev + 1,
            _ => ideal,
        };
        positions.push(p);
        last = Some(p);
    }
    RoutingPlan::new(positions, t)
}

pub fn plan_for(
    strategy: RoutingStrategy,
    t: usize,
    l: usize,
) -> Result<RoutingPlan, ClassifierError> {
    match strategy {
        RoutingStrategy::FirstL => plan_first_l(t, l),
        RoutingStrategy::Aligned => plan_aligned(t, l),
    }
}

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    Integer,
    Relaxed,
}

impl DesignMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignMode::Integer => "integer",
            DesignMode::Relaxed => "relaxed",
        }
    }
}

/// Charger counts `x` and prices `y`, both indexed like the network's node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mode: DesignMode,
}

impl Design {
    pub fn closed(n: usize, mode: DesignMode) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
            mode,
        }
    }

    pub fn total_chargers(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn is_open(&self, i: usize) -> bool {
        self.x[i] > 0.0
    }

    pub fn open_stations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.x.len()).filter(|&i| self.is_open(i))
    }

    pub fn fits_budget(&self, budget: u32) -> bool {
        self.total_chargers() <= budget as f64
    }

    pub fn validate_shape(&self, nodes: usize) -> Result<()> {
        if self.x.len() != nodes || self.y.len() != nodes {
            return Err(Error::DimensionMismatch(format!(
                "design has {}/{} entries for {nodes} nodes",
                self.x.len(),
                self.y.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self, nodes: usize, budget: u32) -> Result<()> {
        self.validate_shape(nodes)?;
        for (i, (&x, &y)) in self.x.iter().zip(&self.y).enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Validation(format!("x[{i}] = {x} is not non-negative")));
            }
            if !(y.is_finite() && y >= 0.0) {
                return Err(Error::Validation(format!("y[{i}] = {y} is not non-negative")));
            }
            if self.mode == DesignMode::Integer {
                if x.fract() != 0.0 {
                    return Err(Error::Validation(format!("x[{i}] = {x} is not integral")));
                }
                if x == 0.0 && y != 0.0 {
                    return Err(Error::Validation(format!(
                        "y[{i}] must be 0 at a closed station"
                    )));
                }
            }
        }
        if !self.fits_budget(budget) {
            return Err(Error::Validation(format!(
                "design uses {} chargers, budget is {budget}",
                self.total_chargers()
            )));
        }
        Ok(())
    }
}

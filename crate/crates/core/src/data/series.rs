use crate::error::{Error, Result};

/// A univariate series with its observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub freq: String,
    /// Predictability tier `1..=5`; `None` for synthetic series.
    pub tier: Option<u8>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl TimeSeries {
    /// Fully observed series.
    pub fn new(id: impl Into<String>, freq: impl Into<String>, tier: Option<u8>, values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        Self {
            id: id.into(),
            freq: freq.into(),
            tier,
            values,
            mask,
        }
    }

    pub fn synthetic(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self::new(id, "synthetic", None, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.mask.len() {
            return Err(Error::Shape(format!(
                "series {}: {} values vs {} mask entries",
                self.id,
                self.values.len(),
                self.mask.len()
            )));
        }
        if self.observed_count() == 0 {
            return Err(Error::arg(format!("series {} has no observed values", self.id)));
        }
        if let Some(t) = self.tier {
            if !(1..=5).contains(&t) {
                return Err(Error::arg(format!("series {}: tier {t} outside 1..=5", self.id)));
            }
        }
        Ok(())
    }
}

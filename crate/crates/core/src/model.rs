use crate::discounting::DiscountSpec;
use crate::market::{MarketSpec, Preferences};

/// Discounting, market and preferences of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub discount: DiscountSpec,
    pub market: MarketSpec,
    pub prefs: Preferences,
}

impl Model {
    pub fn new(discount: DiscountSpec, market: MarketSpec, prefs: Preferences) -> Self {
        Self {
            discount,
            market,
            prefs,
        }
    }

    /// Same market and preferences under a different discount function.
    pub fn with_discount(&self, discount: DiscountSpec) -> Self {
        Self {
            discount,
            ..self.clone()
        }
    }
}

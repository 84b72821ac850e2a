use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Work attributed to one scope label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeCost {
    /// Multiply-accumulates from matrix products.
    pub macs: u64,
    /// Elementwise work (nonlinearities, additions, normalizations), one per output element.
    pub elementwise: u64,
}

/// Multiply-accumulate counts keyed by scope label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounter {
    scopes: BTreeMap<String, ScopeCost>,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_macs(&mut self, scope: &str, macs: u64) {
        self.entry(scope).macs += macs;
    }

    pub fn add_elementwise(&mut self, scope: &str, n: u64) {
        self.entry(scope).elementwise += n;
    }

    fn entry(&mut self, scope: &str) -> &mut ScopeCost {
        if !self.scopes.contains_key(scope) {
            self.scopes.insert(scope.to_string(), ScopeCost::default());
        }
        self.scopes.get_mut(scope).expect("inserted above")
    }

    pub fn macs(&self, scope: &str) -> u64 {
        self.scopes.get(scope).map_or(0, |c| c.macs)
    }

    /// Sum of MACs over every scope whose label starts with `prefix`.
    pub fn macs_with_prefix(&self, prefix: &str) -> u64 {
        self.scopes.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, c)| c.macs).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.scopes.values().map(|c| c.macs).sum()
    }

    pub fn scopes(&self) -> &BTreeMap<String, ScopeCost> {
        &self.scopes
    }

    pub fn merge(&mut self, other: &FlopCounter) {
        for (k, v) in &other.scopes {
            let e = self.entry(k);
            e.macs += v.macs;
            e.elementwise += v.elementwise;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scopes_are_additive() {
        let mut a = FlopCounter::new();
        a.add_macs("encoder.attention", 10);
        a.add_macs("encoder.ffn", 5);
        a.add_macs("heads", 1);
        let mut b = FlopCounter::new();
        b.add_macs("encoder.attention", 7);
        a.merge(&b);
        assert_eq!(a.macs("encoder.attention"), 17);
        assert_eq!(a.macs_with_prefix("encoder."), 22);
        assert_eq!(a.total_macs(), 23);
        assert_eq!(a.macs("missing"), 0);
    }
}

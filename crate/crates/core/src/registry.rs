//! Name-keyed registries of dispersion tests and search strategies.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::disptest::{BootstrapTest, ChiSqTest, DispersionTest};
use crate::error::{Error, Result};
use crate::search::{FullSearch, SearchStrategy, StepwiseSearch};

pub struct Registry {
    tests: BTreeMap<&'static str, Box<dyn DispersionTest>>,
    strategies: BTreeMap<&'static str, Box<dyn SearchStrategy>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            tests: BTreeMap::new(),
            strategies: BTreeMap::new(),
        }
    }

    /// Registry holding the built-in tests and strategies.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register_test(Box::new(ChiSqTest));
        r.register_test(Box::new(BootstrapTest));
        r.register_strategy(Box::new(FullSearch));
        r.register_strategy(Box::new(StepwiseSearch));
        r
    }

    /// Adds a test, replacing any previous entry with the same name.
    pub fn register_test(&mut self, test: Box<dyn DispersionTest>) {
        self.tests.insert(test.name(), test);
    }

    pub fn register_strategy(&mut self, strategy: Box<dyn SearchStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn test(&self, name: &str) -> Result<&dyn DispersionTest> {
        self.tests.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::Config(format!(
                "unknown dispersion test `{name}` (known: {})",
                self.test_names().join(", ")
            ))
        })
    }

    pub fn strategy(&self, name: &str) -> Result<&dyn SearchStrategy> {
        self.strategies.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::Config(format!(
                "unknown search strategy `{name}` (known: {})",
                self.strategy_names().join(", ")
            ))
        })
    }

    pub fn test_names(&self) -> Vec<&'static str> {
        self.tests.keys().copied().collect()
    }

    pub fn strategy_names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

pub fn global() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::builtin)
}

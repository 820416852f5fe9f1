use std::collections::BTreeMap;
use std::sync::Arc;

use super::{LinearModel, SystemModel, Unicycle};
use crate::error::{Error, Result};

type Factory = Box<dyn Fn() -> Arc<dyn SystemModel> + Send + Sync>;

/// Name → model factory lookup. User models are added with [`ModelRegistry::register`].
pub struct ModelRegistry {
    factories: BTreeMap<String, Factory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("unicycle", || Arc::new(Unicycle::default()));
        r.register("double_integrator", || {
            Arc::new(LinearModel::double_integrator(0.1))
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<dyn SystemModel> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SystemModel>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

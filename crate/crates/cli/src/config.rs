//! Key-value run configuration with strict unknown-key rejection.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use seqlab_core::error::{Error, Result};
use seqlab_core::io::parse_kv;

pub struct Cfg {
    map: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Cfg {
    pub fn load(path: &Path) -> Result<Cfg> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (k, v) in parse_kv(&text)? {
            if map.insert(k.clone(), v).is_some() {
                return Err(Error::config(format!("duplicate config key '{k}'")));
            }
        }
        Ok(Cfg {
            map,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    #[cfg(test)]
    pub fn from_text(text: &str) -> Result<Cfg> {
        let mut map = BTreeMap::new();
        for (k, v) in parse_kv(text)? {
            map.insert(k, v);
        }
        Ok(Cfg {
            map,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.map.get(key).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn get_str(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn req_str(&self, key: &str) -> Result<String> {
        self.get_str(key)
            .ok_or_else(|| Error::config(format!("missing required config key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::config(format!("config key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| Error::config(format!("missing required config key '{key}'")))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::config(format!("config key '{key}': '{v}' is not a nonnegative integer"))),
        }
    }

    pub fn req_u64(&self, key: &str) -> Result<u64> {
        self.get_u64(key)?
            .ok_or_else(|| Error::config(format!("missing required config key '{key}'")))
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("config key '{key}': '{p}' is not a number")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    pub fn get_u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::config(format!("config key '{key}': '{p}' is not an integer")))
                })
                .collect::<Result<Vec<u64>>>()
                .map(Some),
        }
    }

    /// Fails if any configured key was never consumed by the subcommand.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .map
            .keys()
            .map(String::as_str)
            .filter(|k| !used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_getters_and_unknown_rejection() {
        let cfg = Cfg::from_text("a = 1.5\nb = 7\nname = gaussian\n").unwrap();
        assert_eq!(cfg.req_f64("a").unwrap(), 1.5);
        assert_eq!(cfg.req_u64("b").unwrap(), 7);
        assert!(cfg.finish().is_err()); // name unused
        assert_eq!(cfg.req_str("name").unwrap(), "gaussian");
        cfg.finish().unwrap();
    }

    #[test]
    fn parse_errors() {
        let cfg = Cfg::from_text("x = notanumber\n").unwrap();
        assert!(cfg.req_f64("x").is_err());
        let cfg = Cfg::from_text("xs = 1, 2, oops\n").unwrap();
        assert!(cfg.get_f64_list("xs").is_err());
        let cfg = Cfg::from_text("xs = 1, 2.5, -3\n").unwrap();
        assert_eq!(cfg.get_f64_list("xs").unwrap().unwrap(), vec![1.0, 2.5, -3.0]);
    }
}

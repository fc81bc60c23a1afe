//! Name-keyed registries of strategy constructors.
//!
//! Specs are written `name` or `name:arg` (for example `huber:1.5` or
//! `restarts:50`). The registry splits the spec, looks up the name and
//! hands the optional argument to the constructor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Builder<T> = fn(Option<&str>) -> Result<Box<T>>;

struct Entry<T: ?Sized> {
    help: &'static str,
    build: Builder<T>,
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, help: &'static str, build: Builder<T>) {
        self.entries.insert(name, Entry { help, build });
    }

    pub fn with(mut self, name: &'static str, help: &'static str, build: Builder<T>) -> Self {
        self.register(name, help, build);
        self
    }

    pub fn build(&self, spec: &str) -> Result<Box<T>> {
        let (name, arg) = split_spec(spec);
        let entry = self.entries.get(name).ok_or_else(|| Error::Unknown {
            kind: self.kind,
            name: name.to_string(),
        })?;
        (entry.build)(arg)
    }

    pub fn contains(&self, spec: &str) -> bool {
        self.entries.contains_key(split_spec(spec).0)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn help(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|(k, e)| (*k, e.help)).collect()
    }
}

pub fn split_spec(spec: &str) -> (&str, Option<&str>) {
    let spec = spec.trim();
    match spec.split_once(':') {
        Some((name, arg)) => (name.trim(), Some(arg.trim())),
        None => (spec, None),
    }
}

pub(crate) fn parse_arg<V: std::str::FromStr>(what: &str, arg: Option<&str>) -> Result<V> {
    let raw = arg.ok_or_else(|| Error::invalid(format!("{what} needs an argument")))?;
    raw.parse()
        .map_err(|_| Error::invalid(format!("bad {what} argument '{raw}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn area(&self) -> f64;
    }
    struct Square(f64);
    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn builds_by_name_with_argument() {
        let reg = Registry::<dyn Shape>::new("shape").with("square", "a square", |arg| {
            Ok(Box::new(Square(parse_arg("square", arg)?)) as Box<dyn Shape>)
        });
        assert_eq!(reg.build("square:3").unwrap().area(), 9.0);
        assert!(reg.build("square").is_err());
        assert!(matches!(reg.build("circle:1"), Err(Error::Unknown { .. })));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["square"]);
    }
}

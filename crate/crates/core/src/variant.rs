//! `declare variant` resolution: base function names map to hardware IP
//! kernels when the active device context matches, else to the CPU base.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::KernelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    CpuBase,
    IpVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantEntry {
    pub base_name: String,
    pub variant_name: String,
    pub match_ctx: BTreeSet<String>,
    pub kind: VariantKind,
    pub ip_catalog_ref: Option<KernelKind>,
}

pub fn ctx<I, S>(tags: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    tags.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, Default)]
pub struct VariantRegistry {
    entries: Vec<VariantEntry>,
    catalog: BTreeSet<KernelKind>,
}

impl VariantRegistry {
    /// `catalog` lists the IP kernels that exist as hardware.
    pub fn new(catalog: impl IntoIterator<Item = KernelKind>) -> Self {
        VariantRegistry {
            entries: Vec::new(),
            catalog: catalog.into_iter().collect(),
        }
    }

    /// Registers `do_<kernel>` as CPU base and `hw_<kernel>` under `{vc709}`
    /// for every kernel in the catalog.
    pub fn with_catalog_defaults(catalog: impl IntoIterator<Item = KernelKind>) -> Self {
        let mut reg = VariantRegistry::new(catalog);
        let kinds: Vec<KernelKind> = reg.catalog.iter().copied().collect();
        for k in kinds {
            reg.register_variant(&k.base_function(), &k.base_function(), ctx::<_, &str>([]), VariantKind::CpuBase, None)
                .expect("fresh registry");
            reg.register_variant(&k.base_function(), &k.hw_function(), ctx(["vc709"]), VariantKind::IpVariant, Some(k))
                .expect("fresh registry");
        }
        reg
    }

    pub fn entries(&self) -> &[VariantEntry] {
        &self.entries
    }

    pub fn register_variant(
        &mut self,
        base_name: &str,
        variant_name: &str,
        match_ctx: BTreeSet<String>,
        kind: VariantKind,
        ip_catalog_ref: Option<KernelKind>,
    ) -> Result<usize> {
        if base_name.is_empty() || variant_name.is_empty() {
            return Err(Error::Variant("names must be non-empty".into()));
        }
        match (kind, ip_catalog_ref) {
            (VariantKind::IpVariant, None) => {
                return Err(Error::Variant(format!(
                    "ip variant {variant_name} has no IP catalog entry"
                )))
            }
            (VariantKind::IpVariant, Some(k)) if !self.catalog.contains(&k) => {
                return Err(Error::Variant(format!(
                    "ip variant {variant_name} references {k}, which is not in the IP catalog"
                )))
            }
            _ => {}
        }
        if self
            .entries
            .iter()
            .any(|e| e.base_name == base_name && e.match_ctx == match_ctx)
        {
            return Err(Error::Variant(format!(
                "duplicate registration of {base_name} for context {match_ctx:?}"
            )));
        }
        // Two IP variants of equal specificity could both match a context
        // holding both tag sets.
        if kind == VariantKind::IpVariant
            && self.entries.iter().any(|e| {
                e.base_name == base_name
                    && e.kind == VariantKind::IpVariant
                    && e.match_ctx.len() == match_ctx.len()
            })
        {
            return Err(Error::Variant(format!(
                "{variant_name} ties with an existing variant of {base_name} at specificity {}",
                match_ctx.len()
            )));
        }
        self.entries.push(VariantEntry {
            base_name: base_name.to_string(),
            variant_name: variant_name.to_string(),
            match_ctx,
            kind,
            ip_catalog_ref,
        });
        Ok(self.entries.len() - 1)
    }

    /// Most specific matching IP variant, else the CPU base.
    pub fn resolve(&self, base_name: &str, active_ctx: &BTreeSet<String>) -> Result<&VariantEntry> {
        let candidates: Vec<&VariantEntry> =
            self.entries.iter().filter(|e| e.base_name == base_name).collect();
        if candidates.is_empty() {
            return Err(Error::Variant(format!("unknown base function {base_name}")));
        }
        let best = candidates
            .iter()
            .filter(|e| e.kind == VariantKind::IpVariant && e.match_ctx.is_subset(active_ctx))
            .max_by_key(|e| e.match_ctx.len());
        if let Some(best) = best {
            return Ok(best);
        }
        candidates
            .into_iter()
            .find(|e| e.kind == VariantKind::CpuBase)
            .ok_or_else(|| Error::Variant(format!("{base_name} has no CPU base")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> VariantRegistry {
        let mut r = VariantRegistry::new(KernelKind::ALL);
        r.register_variant("do_laplace2d", "hw_laplace2d", ctx(["vc709"]), VariantKind::IpVariant, Some(KernelKind::Laplace2d))
            .unwrap();
        r.register_variant("do_laplace2d", "do_laplace2d", ctx::<_, &str>([]), VariantKind::CpuBase, None)
            .unwrap();
        r.register_variant("do_jacobi9", "do_jacobi9", ctx::<_, &str>([]), VariantKind::CpuBase, None)
            .unwrap();
        r
    }

    #[test]
    fn resolution() {
        let r = reg();
        assert_eq!(r.resolve("do_laplace2d", &ctx(["vc709"])).unwrap().variant_name, "hw_laplace2d");
        let cpu = r.resolve("do_laplace2d", &ctx::<_, &str>([])).unwrap();
        assert_eq!(cpu.variant_name, "do_laplace2d");
        assert_eq!(cpu.kind, VariantKind::CpuBase);
        assert_eq!(r.resolve("do_jacobi9", &ctx(["vc709"])).unwrap().kind, VariantKind::CpuBase);
        assert!(r.resolve("nope", &ctx(["vc709"])).is_err());
    }

    #[test]
    fn registration_errors() {
        let mut r = reg();
        assert!(r
            .register_variant("do_laplace2d", "hw_laplace2d", ctx(["vc709"]), VariantKind::IpVariant, Some(KernelKind::Laplace2d))
            .is_err());
        assert!(r.register_variant("do_x", "hw_x", ctx(["vc709"]), VariantKind::IpVariant, None).is_err());
        assert!(r.register_variant("", "x", ctx::<_, &str>([]), VariantKind::CpuBase, None).is_err());
        let mut small = VariantRegistry::new([KernelKind::Laplace2d]);
        assert!(small
            .register_variant("do_j", "hw_j", ctx(["vc709"]), VariantKind::IpVariant, Some(KernelKind::Jacobi9pt2d))
            .is_err());
    }

    #[test]
    fn most_specific_wins_and_ties_error() {
        let mut r = reg();
        r.register_variant("do_laplace2d", "hw_laplace2d_fast", ctx(["vc709", "fast"]), VariantKind::IpVariant, Some(KernelKind::Laplace2d))
            .unwrap();
        assert_eq!(r.resolve("do_laplace2d", &ctx(["vc709", "fast"])).unwrap().variant_name, "hw_laplace2d_fast");
        assert_eq!(r.resolve("do_laplace2d", &ctx(["vc709"])).unwrap().variant_name, "hw_laplace2d");
        assert!(r
            .register_variant("do_laplace2d", "hw_other", ctx(["vc709", "slow"]), VariantKind::IpVariant, Some(KernelKind::Laplace2d))
            .is_err());
    }

    #[test]
    fn empty_context_is_always_cpu() {
        let r = VariantRegistry::with_catalog_defaults(KernelKind::ALL);
        for k in KernelKind::ALL {
            assert_eq!(r.resolve(&k.base_function(), &BTreeSet::new()).unwrap().kind, VariantKind::CpuBase);
            let hw = r.resolve(&k.base_function(), &ctx(["vc709"])).unwrap();
            assert_eq!(hw.ip_catalog_ref, Some(k));
        }
    }
}

use serde::Serialize;

use super::config::ModelConfig;

/// Multiply-accumulate counts per layer kind for one inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub patch_embed: u64,
    pub qkv: u64,
    pub qk: u64,
    pub rv: u64,
    pub proj: u64,
    pub mlp1: u64,
    pub mlp2: u64,
    pub head: u64,
}

impl OpCount {
    pub fn for_config(c: &ModelConfig) -> Self {
        let (t, ci, h, b) = (c.tokens as u64, c.embed as u64, c.mlp_hidden as u64, c.blocks as u64);
        let heads = c.heads as u64;
        let hd = c.head_dim as u64;
        Self {
            patch_embed: c.patch_tokens() as u64 * ci * c.patch_dim() as u64,
            qkv: b * t * ci * 3 * ci,
            qk: b * heads * t * t * hd,
            rv: b * heads * t * t * hd,
            proj: b * t * ci * ci,
            mlp1: b * t * ci * h,
            mlp2: b * t * h * ci,
            head: c.classes as u64 * ci,
        }
    }

    pub fn macs(&self) -> u64 {
        self.patch_embed + self.qkv + self.qk + self.rv + self.proj + self.mlp1 + self.mlp2 + self.head
    }

    /// One multiply and one add per MAC.
    pub fn ops(&self) -> u64 {
        2 * self.macs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deit_tiny_is_about_2_5_gops() {
        let ops = OpCount::for_config(&ModelConfig::deit_tiny()).ops() as f64;
        assert!((ops / 2.5e9 - 1.0).abs() < 0.05, "{ops}");
    }
}

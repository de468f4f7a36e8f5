use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::llm::TokenUsage;
use crate::pipeline::PipelineTrace;

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_traces: usize,
    pub usage: TokenUsage,
    pub input_millions: f64,
    pub output_millions: f64,
    pub cost_usd: f64,
    pub by_tag: BTreeMap<String, TokenUsage>,
}

impl CostReport {
    /// `Method | Input(M) | Output(M) | Cost($)` with one row.
    pub fn render_table(&self, label: &str) -> String {
        format!(
            "{:<24} {:>10} {:>10} {:>10}\n{:<24} {:>10.3} {:>10.3} {:>10.2}\n",
            "Method", "Input(M)", "Output(M)", "Cost($)", label, self.input_millions, self.output_millions, self.cost_usd
        )
    }
}

pub fn cost_report(traces: &[PipelineTrace], prices: PriceTable) -> CostReport {
    let mut usage = TokenUsage::default();
    let mut by_tag: BTreeMap<String, TokenUsage> = BTreeMap::new();
    for t in traces {
        usage.add(&t.token_totals);
        for (tag, u) in t.usage_by_tag() {
            by_tag.entry(tag).or_default().add(&u);
        }
    }
    let input_millions = usage.prompt_tokens as f64 / 1e6;
    let output_millions = usage.completion_tokens as f64 / 1e6;
    CostReport {
        n_traces: traces.len(),
        usage,
        input_millions,
        output_millions,
        cost_usd: input_millions * prices.input_per_million + output_millions * prices.output_per_million,
        by_tag,
    }
}

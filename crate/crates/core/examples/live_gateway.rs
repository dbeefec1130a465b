//! One summarize call and one embedding against an OpenAI-compatible
//! endpoint. Needs SIRERAG_API_KEY (or OPENAI_API_KEY); exits quietly
//! without it.

use sirerag::config::{BackendKind, RunConfig};
use sirerag::gateway::prompts::PromptName;

fn main() -> anyhow::Result<()> {
    let mut cfg = RunConfig {
        backend: BackendKind::Live,
        ..RunConfig::default()
    };
    cfg.apply_env();
    if cfg.model.api_key.is_none() {
        println!("no API key set; skipping");
        return Ok(());
    }
    let gw = cfg.gateway()?;
    let text = "Head I was painted by Francis Bacon in 1948.\n\nFrancis Bacon was the son of Sir Nicholas Bacon.";
    let r = gw.prompt(PromptName::Summarize, &[("text", text)], Some(128))?;
    println!("summary ({:.2}s, cached={}): {}", r.latency_seconds, r.cached, r.text);
    let e = gw.embed(&[text.to_string()])?;
    println!("embedding dim {}", e[0].dim());
    println!("{:?}", gw.stats());
    Ok(())
}

//! Prompt templates. The texts live in `assets/prompts/` and are compiled in.

use super::generator::{Prompt, Request};
use super::reflection::Reflection;
use crate::Result;

pub const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
pub const GENERATE: &str = include_str!("../../assets/prompts/generate.txt");
pub const REPAIR: &str = include_str!("../../assets/prompts/repair.txt");

pub fn generation_prompt(reflection: &Reflection, batch_size: usize) -> Result<Prompt> {
    let user = GENERATE
        .replace("{{batch_size}}", &batch_size.to_string())
        .replace("{{reflection}}", &reflection.to_json()?);
    Ok(Prompt {
        system: SYSTEM.to_string(),
        user,
        request: Request::Generate {
            iteration: reflection.iteration,
            batch_size,
        },
    })
}

pub fn repair_prompt(candidate: &str, diagnostic: &str) -> Prompt {
    let user = REPAIR
        .replace("{{candidate}}", candidate)
        .replace("{{diagnostic}}", diagnostic);
    Prompt {
        system: SYSTEM.to_string(),
        user,
        request: Request::Repair {
            candidate: candidate.to_string(),
            diagnostic: diagnostic.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_prompt_carries_text_verbatim() {
        let p = repair_prompt("count(window=last_days(-3))", "type error at byte 20: bad");
        assert!(p.user.contains("count(window=last_days(-3))"));
        assert!(p.user.contains("type error at byte 20: bad"));
        assert!(!p.user.contains("{{"));
    }
}

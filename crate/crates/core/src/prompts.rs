//! Prompt templates. Each is a text asset with `{{name}}` placeholders; any
//! of them can be replaced from a directory of same-named `.txt` files.

use std::path::Path;

pub const SYSTEM_PROMPT: &str = include_str!("../assets/prompts/system.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Templates {
    pub system: String,
    pub decompose: String,
    pub complete: String,
    pub fix: String,
    pub context: String,
    pub baseline: String,
    pub baseline_plantuml: String,
    pub testgen: String,
    pub language_guide: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            system: SYSTEM_PROMPT.to_string(),
            decompose: include_str!("../assets/prompts/decompose.txt").to_string(),
            complete: include_str!("../assets/prompts/complete.txt").to_string(),
            fix: include_str!("../assets/prompts/fix.txt").to_string(),
            context: include_str!("../assets/prompts/context.txt").to_string(),
            baseline: include_str!("../assets/prompts/baseline.txt").to_string(),
            baseline_plantuml: include_str!("../assets/prompts/baseline_plantuml.txt").to_string(),
            testgen: include_str!("../assets/prompts/testgen.txt").to_string(),
            language_guide: include_str!("../assets/prompts/minioo_guide.txt").to_string(),
        }
    }
}

impl Templates {
    /// Defaults, with every `<field>.txt` found in `dir` taking precedence.
    pub fn load_overrides(dir: &Path) -> std::io::Result<Templates> {
        let mut t = Templates::default();
        let slots: [(&str, &mut String); 9] = [
            ("system", &mut t.system),
            ("decompose", &mut t.decompose),
            ("complete", &mut t.complete),
            ("fix", &mut t.fix),
            ("context", &mut t.context),
            ("baseline", &mut t.baseline),
            ("baseline_plantuml", &mut t.baseline_plantuml),
            ("testgen", &mut t.testgen),
            ("language_guide", &mut t.language_guide),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
                log::info!("prompt template `{name}` overridden from {}", path.display());
            }
        }
        Ok(t)
    }
}

/// Substitutes `{{key}}` placeholders in one left-to-right pass; inserted
/// values are never rescanned. Unknown placeholders are kept verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 4 + close]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once() {
        assert_eq!(render("a {{x}} b {{y}}", &[("x", "{{y}}"), ("y", "2")]), "a {{y}} b 2");
        assert_eq!(render("{{missing}} {{x", &[("x", "1")]), "{{missing}} {{x");
    }

    #[test]
    fn defaults_carry_their_placeholders() {
        let t = Templates::default();
        for p in ["{{plantuml}}", "{{requirement}}", "{{operations}}"] {
            assert!(t.decompose.contains(p));
        }
        for p in ["{{unit}}", "{{context}}", "{{targets}}"] {
            assert!(t.complete.contains(p));
            assert!(t.fix.contains(p));
        }
        assert!(t.fix.contains("{{diagnostics}}"));
        let pos = |s: &str| t.decompose.find(s).unwrap();
        assert!(pos("{{plantuml}}") < pos("{{requirement}}"));
        assert!(pos("{{requirement}}") < pos("high cohesion and low coupling"));
        assert!(pos("high cohesion and low coupling") < pos("undefined constants"));
        assert!(pos("undefined constants") < pos("### <Class>.<op>(<arity>)"));
    }

    #[test]
    fn overrides_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("fix.txt"), "FIX {{unit}}").unwrap();
        let t = Templates::load_overrides(dir.path()).unwrap();
        assert_eq!(t.fix, "FIX {{unit}}");
        assert_eq!(t.complete, Templates::default().complete);
    }
}

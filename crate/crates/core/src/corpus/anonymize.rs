use regex::Regex;

use crate::error::{Error, Result};

pub const REDACTED_USER: &str = "[user]";

/// Strips user references from post text.
#[derive(Debug, Clone)]
pub struct Anonymizer {
    mention: Regex,
}

impl Default for Anonymizer {
    fn default() -> Self {
        Anonymizer::reddit()
    }
}

impl Anonymizer {
    /// Reddit's mention family: `u/name`, `/u/name`, `@name`, case-insensitive.
    pub fn reddit() -> Self {
        Anonymizer {
            mention: Regex::new(r"(?i)(?:/?\bu/[A-Za-z0-9_-]+|(?:^|\B)@[A-Za-z0-9_][A-Za-z0-9_-]*)")
                .expect("static mention pattern"),
        }
    }

    pub fn with_pattern(pattern: &str) -> Result<Self> {
        let mention = Regex::new(pattern).map_err(|e| Error::Regex {
            pattern: pattern.to_string(),
            message: e.to_string(),
        })?;
        Ok(Anonymizer { mention })
    }

    pub fn contains_mention(&self, text: &str) -> bool {
        self.mention.is_match(text)
    }

    /// Replaces every mention with [`REDACTED_USER`], repeating until no
    /// mention remains (a replacement can expose a new match at its border).
    pub fn strip(&self, text: &str) -> String {
        let mut current = text.to_string();
        for _ in 0..8 {
            let next = self.mention.replace_all(&current, REDACTED_USER);
            if next == current {
                return current;
            }
            current = next.into_owned();
        }
        current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_common_mention_forms() {
        let a = Anonymizer::reddit();
        assert_eq!(
            a.strip("thanks u/someuser and /u/Other_one!"),
            "thanks [user] and [user]!"
        );
        assert_eq!(a.strip("cc @helper"), "cc [user]");
        assert_eq!(a.strip("email me at a@b.com"), "email me at a@b.com");
        assert_eq!(a.strip("menu/options"), "menu/options");
    }

    proptest! {
        #[test]
        fn output_never_contains_a_mention(s in "[ a-zA-Z/@_u0-9-]{0,60}") {
            let a = Anonymizer::reddit();
            let out = a.strip(&s);
            prop_assert!(!a.contains_mention(&out), "{:?} -> {:?}", s, out);
            prop_assert_eq!(a.strip(&out), out.clone());
        }
    }
}

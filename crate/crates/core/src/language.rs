use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Project language. The seven named variants are the supported set; any
/// other language is carried as text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    Java,
    Python,
    JavaScript,
    TypeScript,
    Kotlin,
    CSharp,
    Cpp,
    Other(String),
}

impl Language {
    pub const SUPPORTED: [Language; 7] = [
        Language::Java,
        Language::Python,
        Language::JavaScript,
        Language::TypeScript,
        Language::Kotlin,
        Language::CSharp,
        Language::Cpp,
    ];

    pub fn is_supported(&self) -> bool {
        !matches!(self, Language::Other(_))
    }

    /// Display name as used by GitHub's language statistics.
    pub fn name(&self) -> &str {
        match self {
            Language::Java => "Java",
            Language::Python => "Python",
            Language::JavaScript => "JavaScript",
            Language::TypeScript => "TypeScript",
            Language::Kotlin => "Kotlin",
            Language::CSharp => "C#",
            Language::Cpp => "C++",
            Language::Other(name) => name,
        }
    }

    /// Language suggested by a file extension (without the dot).
    pub fn from_extension(ext: &str) -> Option<Language> {
        let lang = match ext.to_ascii_lowercase().as_str() {
            "java" => Language::Java,
            "py" | "pyi" => Language::Python,
            "js" | "jsx" | "mjs" | "cjs" => Language::JavaScript,
            "ts" | "tsx" | "mts" | "cts" => Language::TypeScript,
            "kt" | "kts" => Language::Kotlin,
            "cs" => Language::CSharp,
            "cpp" | "cc" | "cxx" | "c++" | "hpp" | "hh" | "hxx" | "h" | "c" => Language::Cpp,
            "rs" => Language::Other("Rust".into()),
            "go" => Language::Other("Go".into()),
            "rb" => Language::Other("Ruby".into()),
            "php" => Language::Other("PHP".into()),
            "swift" => Language::Other("Swift".into()),
            "scala" => Language::Other("Scala".into()),
            _ => return None,
        };
        Some(lang)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lang = match s.trim().to_ascii_lowercase().as_str() {
            "java" => Language::Java,
            "python" => Language::Python,
            "javascript" | "js" => Language::JavaScript,
            "typescript" | "ts" => Language::TypeScript,
            "kotlin" => Language::Kotlin,
            "c#" | "csharp" => Language::CSharp,
            "c++" | "cpp" => Language::Cpp,
            _ => Language::Other(s.trim().to_string()),
        };
        Ok(lang)
    }
}

impl Serialize for Language {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().expect("infallible"))
    }
}

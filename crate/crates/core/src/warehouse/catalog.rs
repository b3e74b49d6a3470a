//! Fixed catalogs: laboratory analytes and the predefined antibiotic list.

use serde::{Deserialize, Serialize};

/// Display-language profile of a warehouse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locale {
    #[default]
    Ja,
    En,
}

impl std::str::FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ja" => Ok(Locale::Ja),
            "en" => Ok(Locale::En),
            other => Err(format!("unknown locale `{other}` (expected ja or en)")),
        }
    }
}

/// One catalog entry. `key` is the canonical identifier used by oracles;
/// the display names are what the warehouse stores and the tools echo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Analyte {
    pub key: &'static str,
    pub ja: &'static str,
    pub en: &'static str,
    pub unit: &'static str,
    pub decimals: u32,
    /// Plausible generation range (low, high).
    pub range: (f64, f64),
    pub panel: Panel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Panel {
    Blood,
    Urine,
}

impl Analyte {
    pub fn display_name(&self, locale: Locale) -> &'static str {
        match locale {
            Locale::Ja => self.ja,
            Locale::En => self.en,
        }
    }

    pub fn has_display_name(&self, name: &str) -> bool {
        self.ja == name || self.en == name
    }
}

pub const WBC: &str = "WBC";
pub const CREATININE: &str = "CRE";
pub const PLATELETS: &str = "PLT";
pub const UREA_NITROGEN: &str = "BUN";

pub const ANALYTES: &[Analyte] = &[
    Analyte {
        key: WBC,
        ja: "白血球数（WBC）",
        en: "White blood cell count (WBC)",
        unit: "10^3/µL",
        decimals: 1,
        range: (1.5, 28.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: "RBC",
        ja: "赤血球数（RBC）",
        en: "Red blood cell count (RBC)",
        unit: "10^6/µL",
        decimals: 2,
        range: (2.5, 5.5),
        panel: Panel::Blood,
    },
    Analyte {
        key: "HGB",
        ja: "ヘモグロビン（Hb）",
        en: "Hemoglobin (Hb)",
        unit: "g/dL",
        decimals: 1,
        range: (7.0, 16.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: PLATELETS,
        ja: "血小板数(PLT)",
        en: "Platelet count (PLT)",
        unit: "10^3/µL",
        decimals: 0,
        range: (40.0, 450.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: "CRP",
        ja: "CRP",
        en: "C-reactive protein (CRP)",
        unit: "mg/dL",
        decimals: 2,
        range: (0.05, 25.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: "ALB",
        ja: "アルブミン",
        en: "Albumin",
        unit: "g/dL",
        decimals: 1,
        range: (1.8, 4.8),
        panel: Panel::Blood,
    },
    Analyte { key: "AST", ja: "AST", en: "AST", unit: "U/L", decimals: 0, range: (10.0, 120.0), panel: Panel::Blood },
    Analyte { key: "ALT", ja: "ALT", en: "ALT", unit: "U/L", decimals: 0, range: (5.0, 110.0), panel: Panel::Blood },
    Analyte {
        key: UREA_NITROGEN,
        ja: "尿素窒素（UN)",
        en: "Urea nitrogen (UN)",
        unit: "mg/dL",
        decimals: 1,
        range: (6.0, 60.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: CREATININE,
        ja: "クレアチニン",
        en: "Creatinine",
        unit: "mg/dL",
        decimals: 2,
        range: (0.45, 3.5),
        panel: Panel::Blood,
    },
    Analyte {
        key: "NA",
        ja: "ナトリウム",
        en: "Sodium",
        unit: "mEq/L",
        decimals: 0,
        range: (128.0, 148.0),
        panel: Panel::Blood,
    },
    Analyte {
        key: "K",
        ja: "カリウム",
        en: "Potassium",
        unit: "mEq/L",
        decimals: 1,
        range: (3.0, 5.6),
        panel: Panel::Blood,
    },
    Analyte {
        key: "USG",
        ja: "尿比重",
        en: "Urine specific gravity",
        unit: "",
        decimals: 3,
        range: (1.005, 1.030),
        panel: Panel::Urine,
    },
    Analyte { key: "UPH", ja: "pH", en: "Urine pH", unit: "", decimals: 1, range: (5.0, 8.0), panel: Panel::Urine },
    Analyte {
        key: "UPRO",
        ja: "尿蛋白定量",
        en: "Urine protein",
        unit: "mg/dL",
        decimals: 0,
        range: (0.0, 150.0),
        panel: Panel::Urine,
    },
];

pub fn analyte(key: &str) -> Option<&'static Analyte> {
    ANALYTES.iter().find(|a| a.key == key)
}

/// Reverse lookup from a stored display name (either language).
pub fn analyte_by_display(name: &str) -> Option<&'static Analyte> {
    ANALYTES.iter().find(|a| a.has_display_name(name))
}

/// Whether `(display name, unit)` is a catalog pair.
pub fn is_known_lab(name: &str, unit: &str) -> bool {
    analyte_by_display(name).is_some_and(|a| a.unit == unit)
}

pub const VANCOMYCIN: &str = "VCM";

/// Predefined antibiotic short names. The tools only ever report these.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntibioticCatalog {
    short_names: Vec<String>,
}

impl Default for AntibioticCatalog {
    fn default() -> Self {
        Self::new(
            ["VCM", "CTRX", "SBT/ABPC", "MEPM", "TAZ/PIPC", "CFPM", "CEZ", "ABPC", "LVFX", "DAP", "LZD"]
                .into_iter()
                .map(str::to_owned),
        )
    }
}

impl AntibioticCatalog {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        Self { short_names: names.into_iter().collect() }
    }

    pub fn contains(&self, short_name: &str) -> bool {
        self.short_names.iter().any(|n| n == short_name)
    }

    pub fn short_names(&self) -> &[String] {
        &self.short_names
    }
}

//! The five clinical tools, shaped after the payloads an EHR data warehouse
//! integration returns to an agent.

use std::sync::Arc;

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::warehouse::{
    CultureResult, DateRange, Interpretation, Locale, PatientId, QueryError, Route, Sex, Specimen, Warehouse,
};

pub const PATIENT_BASIC_INFO: &str = "patient_basic_info";
pub const LAB_RESULTS: &str = "lab_results";
pub const BACTERIA_RESULTS: &str = "bacteria_results";
pub const ANTIBIOTICS_TREATMENT: &str = "antibiotics_treatment";
pub const CALCULATE_COCKCROFT_GAULT: &str = "calculate_cockcroft_gault";

pub const TOOL_NAMES: [&str; 5] =
    [PATIENT_BASIC_INFO, LAB_RESULTS, BACTERIA_RESULTS, ANTIBIOTICS_TREATMENT, CALCULATE_COCKCROFT_GAULT];

pub const DEFAULT_RECORD_LIMIT: usize = 1000;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

impl ToolDescriptor {
    /// Names listed in the schema's `required` array.
    pub fn required(&self) -> Vec<&str> {
        self.input_schema["required"]
            .as_array()
            .map(|r| r.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorCode {
    InvalidParams,
    ExecutionError,
    UnknownTool,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("Unknown tool: {0}")]
    UnknownTool(String),
    #[error("Invalid arguments for tool {tool}: {message}")]
    InvalidParams { tool: String, message: String },
    #[error("Error executing tool {tool}: {message}")]
    Execution { tool: String, message: String },
}

impl ToolError {
    pub fn code(&self) -> ToolErrorCode {
        match self {
            ToolError::UnknownTool(_) => ToolErrorCode::UnknownTool,
            ToolError::InvalidParams { .. } => ToolErrorCode::InvalidParams,
            ToolError::Execution { .. } => ToolErrorCode::ExecutionError,
        }
    }
}

/// Wording consumed verbatim by agents and by the error classifier.
pub fn too_many_items_message(matched: usize, limit: usize) -> String {
    format!(
        "Too many items matched ({matched} records). Try again with shorter duration or more strict conditions. (max: {limit})"
    )
}

pub const TOO_MANY_ITEMS_PREFIX: &str = "Too many items matched (";

/// Unrounded Cockcroft–Gault creatinine clearance in mL/min.
pub fn creatinine_clearance(age: u32, sex: Sex, weight: f64, serum_creatinine: f64) -> f64 {
    let male = (140.0 - f64::from(age)) * weight / (72.0 * serum_creatinine);
    match sex {
        Sex::Male => male,
        Sex::Female => male * 0.85,
    }
}

/// Half-up rounding to one decimal place.
pub fn round1(x: f64) -> f64 {
    (x * 10.0 + 0.5).floor() / 10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CockcroftGaultInput {
    pub age: u32,
    pub sex: Sex,
    pub weight: f64,
    pub serum_creatinine: f64,
}

impl CockcroftGaultInput {
    pub fn validate(&self) -> Result<(), String> {
        if !(18..=130).contains(&self.age) {
            return Err(format!("age must be an integer between 18 and 130, got {}", self.age));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(format!("weight must be > 0, got {}", self.weight));
        }
        if !(self.serum_creatinine.is_finite() && self.serum_creatinine > 0.0) {
            return Err(format!("serum_creatinine must be > 0, got {}", self.serum_creatinine));
        }
        Ok(())
    }

    pub fn clearance(&self) -> f64 {
        round1(creatinine_clearance(self.age, self.sex, self.weight, self.serum_creatinine))
    }
}

fn de_sex<'de, D: Deserializer<'de>>(d: D) -> Result<Sex, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "male" | "Male" | "MALE" | "M" | "m" | "男性" | "男" => Ok(Sex::Male),
        "female" | "Female" | "FEMALE" | "F" | "f" | "女性" | "女" => Ok(Sex::Female),
        other => Err(serde::de::Error::custom(format!("sex must be \"male\" or \"female\", got {other:?}"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatientArgs {
    patient_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowArgs {
    patient_id: String,
    start_date: NaiveDate,
    end_date: NaiveDate,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CockcroftGaultArgs {
    age: u32,
    #[serde(deserialize_with = "de_sex")]
    sex: Sex,
    weight: f64,
    serum_creatinine: f64,
}

#[derive(Clone, Debug)]
pub struct ToolConfig {
    pub record_limit: usize,
    /// Language of fixed labels the tools add themselves (e.g. the sex echo).
    pub locale: Locale,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self { record_limit: DEFAULT_RECORD_LIMIT, locale: Locale::Ja }
    }
}

#[derive(Serialize)]
struct PersonalInfo {
    sex: &'static str,
    date_of_birth: NaiveDate,
}

#[derive(Serialize)]
struct SomatometryView {
    somatometry_date: String,
    height: Option<f64>,
    weight: f64,
    body_mass_index: Option<f64>,
}

#[derive(Serialize)]
struct BasicInfo {
    personal_info: PersonalInfo,
    allergies: Vec<String>,
    latest_somatometry: Option<SomatometryView>,
}

#[derive(Serialize)]
struct SusceptibilityRow<'a> {
    antimicrobial: &'a str,
    result: Interpretation,
}

#[derive(Serialize)]
struct OrganismView<'a> {
    organism: &'a str,
    results: Vec<SusceptibilityRow<'a>>,
}

#[derive(Serialize)]
struct CultureView<'a> {
    specimen: Specimen,
    collected_at: String,
    organisms: &'a [String],
    susceptibility: Vec<OrganismView<'a>>,
}

impl<'a> From<&'a CultureResult> for CultureView<'a> {
    fn from(c: &'a CultureResult) -> Self {
        Self {
            specimen: c.specimen,
            collected_at: c.collected_at.format(TIMESTAMP_FORMAT).to_string(),
            organisms: &c.organisms,
            susceptibility: c
                .susceptibilities
                .iter()
                .map(|s| OrganismView {
                    organism: &s.organism,
                    results: s
                        .results
                        .iter()
                        .map(|r| SusceptibilityRow { antimicrobial: &r.antimicrobial, result: r.result })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct AntibioticsView {
    antibiotics_found: bool,
    oral_antibiotics: Vec<String>,
    iv_antibiotics: Vec<String>,
}

/// Stateless tool surface over a shared, immutable warehouse.
#[derive(Clone)]
pub struct ClinicalTools {
    warehouse: Arc<Warehouse>,
    config: ToolConfig,
}

impl ClinicalTools {
    pub fn new(warehouse: Arc<Warehouse>) -> Self {
        Self::with_config(warehouse, ToolConfig::default())
    }

    pub fn with_config(warehouse: Arc<Warehouse>, config: ToolConfig) -> Self {
        Self { warehouse, config }
    }

    pub fn warehouse(&self) -> &Warehouse {
        &self.warehouse
    }

    pub fn config(&self) -> &ToolConfig {
        &self.config
    }

    /// Descriptors in publication order.
    pub fn descriptors() -> Vec<ToolDescriptor> {
        let patient_id = json!({"type": "string", "description": "Patient identifier"});
        let date = |what: &str| json!({"type": "string", "format": "date", "description": format!("{what} of the retrieval window (YYYY-MM-DD, inclusive)")});
        let windowed = |name: &str, description: &str| ToolDescriptor {
            name: name.to_owned(),
            description: description.to_owned(),
            input_schema: json!({
                "type": "object",
                "properties": {
                    "patient_id": patient_id,
                    "start_date": date("First day"),
                    "end_date": date("Last day"),
                },
                "required": ["patient_id", "start_date", "end_date"],
                "additionalProperties": false,
            }),
        };
        vec![
            ToolDescriptor {
                name: PATIENT_BASIC_INFO.to_owned(),
                description: "Get a patient's sex, date of birth, allergy list and most recent height/weight/BMI measurement.".to_owned(),
                input_schema: json!({
                    "type": "object",
                    "properties": {"patient_id": patient_id},
                    "required": ["patient_id"],
                    "additionalProperties": false,
                }),
            },
            windowed(LAB_RESULTS, "Get laboratory test results (blood, urine) collected between start_date and end_date, grouped by collection time. Fails when too many rows match."),
            windowed(BACTERIA_RESULTS, "Get microbiology culture results (blood, sputum, urine) collected between start_date and end_date, with organism susceptibility (S/I/R)."),
            windowed(ANTIBIOTICS_TREATMENT, "Get oral and intravenous administrations of catalogued antibiotics between start_date and end_date, one line per administration record."),
            ToolDescriptor {
                name: CALCULATE_COCKCROFT_GAULT.to_owned(),
                description: "Estimate creatinine clearance (mL/min) with the Cockcroft-Gault equation.".to_owned(),
                input_schema: json!({
                    "type": "object",
                    "properties": {
                        "age": {"type": "integer", "minimum": 18, "description": "Age in years"},
                        "sex": {"type": "string", "enum": ["male", "female"]},
                        "weight": {"type": "number", "exclusiveMinimum": 0, "description": "Body weight in kg"},
                        "serum_creatinine": {"type": "number", "exclusiveMinimum": 0, "description": "Serum creatinine in mg/dL"},
                    },
                    "required": ["age", "sex", "weight", "serum_creatinine"],
                    "additionalProperties": false,
                }),
            },
        ]
    }

    /// Dispatches one call. The payload is a JSON value with stable key order.
    pub fn call(&self, name: &str, args: &Value) -> Result<Value, ToolError> {
        match name {
            PATIENT_BASIC_INFO => {
                let a: PatientArgs = parse_args(name, args)?;
                self.patient_basic_info(&PatientId::new(a.patient_id))
            }
            LAB_RESULTS | BACTERIA_RESULTS | ANTIBIOTICS_TREATMENT => {
                let a: WindowArgs = parse_args(name, args)?;
                let range = DateRange::new(a.start_date, a.end_date).map_err(|e| invalid(name, e.to_string()))?;
                let id = PatientId::new(a.patient_id);
                match name {
                    LAB_RESULTS => self.lab_results(&id, range),
                    BACTERIA_RESULTS => self.bacteria_results(&id, range),
                    _ => self.antibiotics_treatment(&id, range),
                }
            }
            CALCULATE_COCKCROFT_GAULT => {
                let a: CockcroftGaultArgs = parse_args(name, args)?;
                self.calculate_cockcroft_gault(CockcroftGaultInput {
                    age: a.age,
                    sex: a.sex,
                    weight: a.weight,
                    serum_creatinine: a.serum_creatinine,
                })
            }
            other => Err(ToolError::UnknownTool(other.to_owned())),
        }
    }

    pub fn patient_basic_info(&self, id: &PatientId) -> Result<Value, ToolError> {
        let (patient, latest) = self.warehouse.get_patient(id).map_err(|e| exec(PATIENT_BASIC_INFO, e))?;
        let info = BasicInfo {
            personal_info: PersonalInfo {
                sex: patient.sex.label(self.config.locale),
                date_of_birth: patient.date_of_birth,
            },
            allergies: patient.allergies.clone(),
            latest_somatometry: latest.map(|s| SomatometryView {
                somatometry_date: s.measured_at.format(TIMESTAMP_FORMAT).to_string(),
                height: s.height,
                weight: s.weight,
                body_mass_index: s.bmi,
            }),
        };
        Ok(serde_json::to_value(info).expect("serializable"))
    }

    pub fn lab_results(&self, id: &PatientId, range: DateRange) -> Result<Value, ToolError> {
        let rows = self.warehouse.query_labs(id, range, self.config.record_limit).map_err(|e| exec(LAB_RESULTS, e))?;
        let mut panels: IndexMap<String, IndexMap<String, String>> = IndexMap::new();
        for row in rows {
            panels
                .entry(row.collected_at.format(TIMESTAMP_FORMAT).to_string())
                .or_default()
                .insert(row.analyte.clone(), row.display_value());
        }
        Ok(serde_json::to_value(panels).expect("serializable"))
    }

    pub fn bacteria_results(&self, id: &PatientId, range: DateRange) -> Result<Value, ToolError> {
        let rows = self.warehouse.query_cultures(id, range).map_err(|e| exec(BACTERIA_RESULTS, e))?;
        let cultures: Vec<CultureView<'_>> = rows.iter().map(CultureView::from).collect();
        Ok(json!({ "cultures": cultures }))
    }

    pub fn antibiotics_treatment(&self, id: &PatientId, range: DateRange) -> Result<Value, ToolError> {
        let rows = self.warehouse.query_antibiotics(id, range).map_err(|e| exec(ANTIBIOTICS_TREATMENT, e))?;
        let mut view = AntibioticsView {
            antibiotics_found: !rows.is_empty(),
            oral_antibiotics: Vec::new(),
            iv_antibiotics: Vec::new(),
        };
        for a in rows {
            let line = format!("{} - {} {}", a.date, a.short_name, a.dose_text);
            match a.route {
                Route::Oral => view.oral_antibiotics.push(line),
                Route::Iv => view.iv_antibiotics.push(line),
            }
        }
        Ok(serde_json::to_value(view).expect("serializable"))
    }

    pub fn calculate_cockcroft_gault(&self, input: CockcroftGaultInput) -> Result<Value, ToolError> {
        input.validate().map_err(|m| invalid(CALCULATE_COCKCROFT_GAULT, m))?;
        Ok(json!({
            "creatinine_clearance": input.clearance(),
            "unit": "mL/min",
            "parameters": {
                "age": input.age,
                "sex": input.sex.label(self.config.locale),
                "weight": input.weight,
                "serum_creatinine": input.serum_creatinine,
            }
        }))
    }
}

fn parse_args<T: serde::de::DeserializeOwned>(tool: &str, args: &Value) -> Result<T, ToolError> {
    if !args.is_object() {
        return Err(invalid(tool, "arguments must be a JSON object".to_owned()));
    }
    T::deserialize(args).map_err(|e| invalid(tool, e.to_string()))
}

fn invalid(tool: &str, message: String) -> ToolError {
    ToolError::InvalidParams { tool: tool.to_owned(), message }
}

fn exec(tool: &str, e: QueryError) -> ToolError {
    let message = match e {
        QueryError::TooManyRecords { matched, limit } => too_many_items_message(matched, limit),
        QueryError::InvalidRange { .. } => return invalid(tool, e.to_string()),
        other => other.to_string(),
    };
    ToolError::Execution { tool: tool.to_owned(), message }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warehouse::{AntibioticAdministration, LabResult, Patient, Somatometry, Tables, Timestamp};
    use chrono::DateTime;

    fn ts(s: &str) -> Timestamp {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn tools() -> ClinicalTools {
        let patient = |id: &str, allergies: Vec<String>| Patient {
            patient_id: id.into(),
            sex: Sex::Male,
            date_of_birth: d("1975-02-01"),
            allergies,
            on_dialysis: false,
        };
        let abx = |id, date: &str, route, name: &str, dose: &str| AntibioticAdministration {
            record_id: id,
            patient_id: "P001".into(),
            date: d(date),
            route,
            short_name: name.into(),
            dose_text: dose.into(),
        };
        let sbt = "1.5g/V 2.0V １日４回 ６時間毎";
        let w = Warehouse::from_tables(Tables {
            patients: vec![patient("P001", vec![]), patient("P002", vec!["ペニシリン系".into()])],
            somatometry: vec![Somatometry {
                record_id: 1,
                patient_id: "P001".into(),
                measured_at: ts("2024-07-14T10:20:00+09:00"),
                height: Some(170.0),
                weight: 55.4,
                bmi: Some(19.2),
            }],
            labs: vec![
                LabResult {
                    record_id: 1,
                    patient_id: "P001".into(),
                    collected_at: ts("2024-04-22T08:00:00+09:00"),
                    analyte: "白血球数（WBC）".into(),
                    value: 2.3,
                    unit: "10^3/µL".into(),
                },
                LabResult {
                    record_id: 2,
                    patient_id: "P001".into(),
                    collected_at: ts("2024-04-22T08:00:00+09:00"),
                    analyte: "血小板数(PLT)".into(),
                    value: 88.0,
                    unit: "10^3/µL".into(),
                },
            ],
            cultures: vec![],
            antibiotics: vec![
                abx(1, "2024-11-09", Route::Iv, "SBT/ABPC", sbt),
                abx(2, "2024-11-09", Route::Iv, "SBT/ABPC", sbt),
                abx(3, "2024-11-09", Route::Iv, "VCM", "0.5g/V 3.0V １日１回（ベース）"),
                abx(4, "2024-11-09", Route::Iv, "SBT/ABPC", sbt),
                abx(5, "2024-11-12", Route::Oral, "LVFX", "500mg 1錠 １日１回 朝食後"),
            ],
        })
        .unwrap();
        ClinicalTools::new(Arc::new(w))
    }

    #[test]
    fn reference_clearance_value() {
        let male = CockcroftGaultInput { age: 49, sex: Sex::Male, weight: 77.3, serum_creatinine: 0.86 };
        assert_eq!(male.clearance(), 113.6);
        let female = CockcroftGaultInput { sex: Sex::Female, ..male };
        assert_eq!(female.clearance(), 96.6);
    }

    #[test]
    fn clearance_payload_shape() {
        let out = tools()
            .call(
                CALCULATE_COCKCROFT_GAULT,
                &json!({"age": 49, "sex": "male", "weight": 77.3, "serum_creatinine": 0.86}),
            )
            .unwrap();
        assert_eq!(
            serde_json::to_string(&out).unwrap(),
            r#"{"creatinine_clearance":113.6,"unit":"mL/min","parameters":{"age":49,"sex":"男性","weight":77.3,"serum_creatinine":0.86}}"#
        );
    }

    #[test]
    fn clearance_rejects_out_of_range_inputs() {
        let t = tools();
        let err = t
            .call(CALCULATE_COCKCROFT_GAULT, &json!({"age": 49, "sex": "male", "weight": 0, "serum_creatinine": 0.86}))
            .unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::InvalidParams);
        assert!(err.to_string().contains("weight"));
        let err = t
            .call(CALCULATE_COCKCROFT_GAULT, &json!({"age": 12, "sex": "male", "weight": 30, "serum_creatinine": 0.5}))
            .unwrap_err();
        assert!(err.to_string().contains("age"));
        let err = t
            .call(CALCULATE_COCKCROFT_GAULT, &json!({"age": 49, "sex": "x", "weight": 70, "serum_creatinine": 0.5}))
            .unwrap_err();
        assert!(err.to_string().contains("sex"));
    }

    #[test]
    fn basic_info_shape() {
        let out = tools().call(PATIENT_BASIC_INFO, &json!({"patient_id": "P001"})).unwrap();
        assert_eq!(out["allergies"], json!([]));
        assert_eq!(out["latest_somatometry"]["weight"], json!(55.4));
        assert_eq!(out["latest_somatometry"]["somatometry_date"], json!("2024-07-14 10:20:00"));
        let keys: Vec<_> = out.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["personal_info", "allergies", "latest_somatometry"]);

        let none = tools().call(PATIENT_BASIC_INFO, &json!({"patient_id": "P002"})).unwrap();
        assert!(none["latest_somatometry"].is_null());
        assert_eq!(none["allergies"], json!(["ペニシリン系"]));
    }

    #[test]
    fn lab_results_group_by_timestamp() {
        let out = tools()
            .call(LAB_RESULTS, &json!({"patient_id": "P001", "start_date": "2024-03-22", "end_date": "2024-04-22"}))
            .unwrap();
        assert_eq!(
            out,
            json!({"2024-04-22 08:00:00": {"白血球数（WBC）": "2.3 10^3/µL", "血小板数(PLT)": "88 10^3/µL"}})
        );
    }

    #[test]
    fn lab_results_schema_errors() {
        let t = tools();
        let err = t.call(LAB_RESULTS, &json!({"patient_id": "P001"})).unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::InvalidParams);
        let err = t
            .call(LAB_RESULTS, &json!({"patient_id": "P001", "start_date": "2024-05-02", "end_date": "2024-05-01"}))
            .unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::InvalidParams);
        let err = t.call(LAB_RESULTS, &json!(["P001"])).unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::InvalidParams);
        let err = t
            .call(
                LAB_RESULTS,
                &json!({"patient_id": "P001", "start_date": "2024-05-01", "end_date": "2024-05-01", "x": 1}),
            )
            .unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::InvalidParams);
    }

    #[test]
    fn over_limit_message_is_exact() {
        let t =
            ClinicalTools::with_config(tools().warehouse.clone(), ToolConfig { record_limit: 1, locale: Locale::Ja });
        let err = t
            .call(LAB_RESULTS, &json!({"patient_id": "P001", "start_date": "2024-01-01", "end_date": "2024-04-22"}))
            .unwrap_err();
        assert_eq!(
            err.to_string(),
            "Error executing tool lab_results: Too many items matched (2 records). Try again with shorter duration or more strict conditions. (max: 1)"
        );
        assert_eq!(
            too_many_items_message(2513, 1000),
            "Too many items matched (2513 records). Try again with shorter duration or more strict conditions. (max: 1000)"
        );
    }

    #[test]
    fn antibiotic_lines_preserve_duplicates() {
        let out = tools()
            .call(
                ANTIBIOTICS_TREATMENT,
                &json!({"patient_id": "P001", "start_date": "2024-11-09", "end_date": "2024-11-09"}),
            )
            .unwrap();
        assert_eq!(
            out,
            json!({
                "antibiotics_found": true,
                "oral_antibiotics": [],
                "iv_antibiotics": [
                    "2024-11-09 - SBT/ABPC 1.5g/V 2.0V １日４回 ６時間毎",
                    "2024-11-09 - SBT/ABPC 1.5g/V 2.0V １日４回 ６時間毎",
                    "2024-11-09 - VCM 0.5g/V 3.0V １日１回（ベース）",
                    "2024-11-09 - SBT/ABPC 1.5g/V 2.0V １日４回 ６時間毎"
                ]
            })
        );
        let empty = tools()
            .call(
                ANTIBIOTICS_TREATMENT,
                &json!({"patient_id": "P001", "start_date": "2024-11-10", "end_date": "2024-11-11"}),
            )
            .unwrap();
        assert_eq!(empty, json!({"antibiotics_found": false, "oral_antibiotics": [], "iv_antibiotics": []}));
        let oral = tools()
            .call(
                ANTIBIOTICS_TREATMENT,
                &json!({"patient_id": "P001", "start_date": "2024-11-12", "end_date": "2024-11-12"}),
            )
            .unwrap();
        assert_eq!(oral["iv_antibiotics"], json!([]));
        assert_eq!(oral["oral_antibiotics"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn unknown_patient_and_tool() {
        let t = tools();
        let err = t.call(PATIENT_BASIC_INFO, &json!({"patient_id": "P999"})).unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::ExecutionError);
        let err = t.call("no_such_tool", &json!({})).unwrap_err();
        assert_eq!(err.code(), ToolErrorCode::UnknownTool);
    }

    #[test]
    fn descriptors_match_tool_table() {
        let ds = ClinicalTools::descriptors();
        let names: Vec<_> = ds.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, TOOL_NAMES);
        assert_eq!(ds[4].required(), ["age", "sex", "weight", "serum_creatinine"]);
        assert_eq!(ds[0].required(), ["patient_id"]);
    }
}

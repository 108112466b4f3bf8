//! Territory boundaries and attribute metadata, assembled into the
//! attribute → strata catalog.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{MultiPolygon, Polygon, Ring};
use crate::grid::hex;

pub const ATTR_TERRITORY: &str = "territory";
pub const ATTR_SUBREGION: &str = "subregion";
pub const ATTR_INCOME: &str = "income";
pub const ATTR_LANDCOVER: &str = "landcover";
pub const STRATUM_LAND: &str = "land";
pub const STRATUM_WATER: &str = "water";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncomeClass {
    High,
    UpperMiddle,
    LowerMiddle,
    Low,
}

impl IncomeClass {
    pub const ALL: [IncomeClass; 4] = [
        IncomeClass::High,
        IncomeClass::UpperMiddle,
        IncomeClass::LowerMiddle,
        IncomeClass::Low,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IncomeClass::High => "high",
            IncomeClass::UpperMiddle => "upper_middle",
            IncomeClass::LowerMiddle => "lower_middle",
            IncomeClass::Low => "low",
        }
    }
}

impl fmt::Display for IncomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IncomeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        match norm.as_str() {
            "high" => Ok(IncomeClass::High),
            "upper_middle" => Ok(IncomeClass::UpperMiddle),
            "lower_middle" => Ok(IncomeClass::LowerMiddle),
            "low" => Ok(IncomeClass::Low),
            _ => Err(Error::Schema(format!("unknown income class `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerritoryRecord {
    pub territory_id: String,
    pub display_name: String,
    pub geometry: MultiPolygon,
    pub subregion: Option<String>,
    pub income_class: Option<IncomeClass>,
}

impl TerritoryRecord {
    pub fn new(territory_id: impl Into<String>, display_name: impl Into<String>, geometry: MultiPolygon) -> Self {
        Self {
            territory_id: territory_id.into(),
            display_name: display_name.into(),
            geometry,
            subregion: None,
            income_class: None,
        }
    }
}

/// Reads territory boundaries from a GeoJSON file, or from every `*.geojson`
/// file in a directory (in file-name order).
///
/// Self-intersecting rings are kept and read with the even-odd rule unless
/// `strict` is set, in which case they are rejected.
pub fn load_boundaries(path: &Path, strict: bool) -> Result<Vec<TerritoryRecord>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "geojson"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        for record in parse_geojson(&text, file, strict)? {
            if !seen.insert(record.territory_id.clone()) {
                return Err(Error::Conflict(format!(
                    "territory `{}` defined more than once ({})",
                    record.territory_id,
                    file.display()
                )));
            }
            records.push(record);
        }
    }
    Ok(records)
}

/// Parses one GeoJSON document (FeatureCollection or single Feature).
pub fn parse_geojson(text: &str, origin: &Path, strict: bool) -> Result<Vec<TerritoryRecord>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
    let features: Vec<&Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::parse(origin, "FeatureCollection without `features` array"))?
            .iter()
            .collect(),
        Some("Feature") => vec![&doc],
        other => return Err(Error::parse(origin, format!("unsupported GeoJSON type {other:?}"))),
    };

    features
        .into_iter()
        .enumerate()
        .map(|(i, f)| parse_feature(f, origin, i, strict))
        .collect()
}

fn parse_feature(feature: &Value, origin: &Path, index: usize, strict: bool) -> Result<TerritoryRecord> {
    let locus = format!("{} feature {index}", origin.display());
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Schema(format!("{locus}: missing `properties`")))?;
    let prop = |key: &str| -> Result<String> {
        match props.get(key) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            _ => Err(Error::Schema(format!("{locus}: missing property `{key}`"))),
        }
    };
    let territory_id = prop("territory_id")?;
    let display_name = prop("display_name")?;
    let locus = format!("{locus} (`{territory_id}`)");

    let geometry = feature
        .get("geometry")
        .filter(|g| !g.is_null())
        .ok_or_else(|| Error::Schema(format!("{locus}: missing geometry")))?;
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| Error::parse(origin, format!("{locus}: geometry without coordinates")))?;
    let raw_polygons: Vec<&Value> = match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![coords],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| Error::parse(origin, format!("{locus}: malformed MultiPolygon")))?
            .iter()
            .collect(),
        other => {
            return Err(Error::Schema(format!(
                "{locus}: geometry type {other:?} is not Polygon or MultiPolygon"
            )))
        }
    };

    let mut polygons = Vec::new();
    for raw in raw_polygons {
        let rings = raw
            .as_array()
            .ok_or_else(|| Error::parse(origin, format!("{locus}: polygon is not an array of rings")))?;
        let mut parsed = Vec::with_capacity(rings.len());
        for ring in rings {
            parsed.push(parse_ring(ring, origin, &locus)?);
        }
        let mut parsed = parsed.into_iter();
        let Some(exterior) = parsed.next() else { continue };
        if exterior.is_degenerate() {
            if strict {
                return Err(Error::Geometry(format!("{locus}: degenerate exterior ring")));
            }
            warn!("{locus}: dropping degenerate polygon");
            continue;
        }
        let mut holes = Vec::new();
        for hole in parsed {
            if hole.is_degenerate() {
                if strict {
                    return Err(Error::Geometry(format!("{locus}: degenerate hole")));
                }
                warn!("{locus}: dropping degenerate hole");
                continue;
            }
            holes.push(hole);
        }
        if std::iter::once(&exterior).chain(&holes).any(Ring::self_intersects) {
            if strict {
                return Err(Error::Geometry(format!("{locus}: self-intersecting ring")));
            }
            warn!("{locus}: self-intersecting ring, interpreting with the even-odd rule");
        }
        polygons.push(Polygon::new(exterior, holes));
    }

    if polygons.is_empty() {
        return Err(Error::Schema(format!("{locus}: empty geometry")));
    }
    Ok(TerritoryRecord::new(territory_id, display_name, MultiPolygon(polygons)))
}

fn parse_ring(ring: &Value, origin: &Path, locus: &str) -> Result<Ring> {
    let positions = ring
        .as_array()
        .ok_or_else(|| Error::parse(origin, format!("{locus}: ring is not an array")))?;
    let mut points = Vec::with_capacity(positions.len());
    for pos in positions {
        let xy = pos
            .as_array()
            .filter(|a| a.len() >= 2)
            .ok_or_else(|| Error::parse(origin, format!("{locus}: malformed position {pos}")))?;
        let (Some(lon), Some(lat)) = (xy[0].as_f64(), xy[1].as_f64()) else {
            return Err(Error::parse(origin, format!("{locus}: non-numeric position {pos}")));
        };
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Schema(format!("{locus}: coordinate ({lon}, {lat}) out of range")));
        }
        points.push([lon, lat]);
    }
    Ok(Ring::new(points))
}

/// Subregion and income lookups keyed by territory id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTables {
    pub subregion: BTreeMap<String, String>,
    pub income: BTreeMap<String, IncomeClass>,
}

fn read_two_column_csv(path: &Path, value_header: &str) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .quoting(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "territory_id" || &headers[1] != value_header {
        return Err(Error::Schema(format!(
            "{}: expected header `territory_id,{value_header}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}

pub fn load_attribute_tables(subregion_csv: &Path, income_csv: &Path) -> Result<AttributeTables> {
    let mut tables = AttributeTables::default();
    for (id, sub) in read_two_column_csv(subregion_csv, "subregion")? {
        if tables.subregion.insert(id.clone(), sub).is_some() {
            return Err(Error::Conflict(format!("territory `{id}` listed twice in {}", subregion_csv.display())));
        }
    }
    let mut seen = BTreeSet::new();
    for (id, token) in read_two_column_csv(income_csv, "income_class")? {
        if !seen.insert(id.clone()) {
            return Err(Error::Conflict(format!("territory `{id}` listed twice in {}", income_csv.display())));
        }
        // an empty class is the same as omitting the row
        if token.is_empty() {
            continue;
        }
        let class: IncomeClass = token
            .parse()
            .map_err(|_| Error::Schema(format!("{}: territory `{id}` has unknown income class `{token}`", income_csv.display())))?;
        tables.income.insert(id, class);
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StratumMembers {
    Territories { territories: Vec<String> },
    Complement { complement_of: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub name: String,
    #[serde(flatten)]
    pub members: StratumMembers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub strata: Vec<Stratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TerritoryEntry {
    territory_id: String,
    display_name: String,
    subregion: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    income_class: Option<IncomeClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CatalogDocument {
    version: u32,
    geometry_fingerprint: String,
    territories: Vec<TerritoryEntry>,
    attributes: Vec<Attribute>,
}

/// Attributes → strata → member territories, plus the territory geometries.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCatalog {
    territories: Vec<TerritoryRecord>,
    index: HashMap<String, usize>,
    attributes: Vec<Attribute>,
}

pub fn build_catalog(mut records: Vec<TerritoryRecord>, tables: &AttributeTables) -> Result<AttributeCatalog> {
    let missing: Vec<&str> = records
        .iter()
        .filter(|r| !tables.subregion.contains_key(&r.territory_id))
        .map(|r| r.territory_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Completeness(format!(
            "territories without a subregion: {}",
            missing.join(", ")
        )));
    }
    let known: BTreeSet<&str> = records.iter().map(|r| r.territory_id.as_str()).collect();
    for id in tables.income.keys() {
        if !known.contains(id.as_str()) {
            warn!("income table lists unknown territory `{id}`; ignored");
        }
    }

    for r in &mut records {
        r.subregion = tables.subregion.get(&r.territory_id).cloned();
        r.income_class = tables.income.get(&r.territory_id).copied();
    }
    AttributeCatalog::from_records(records)
}

impl AttributeCatalog {
    /// Builds the catalog from records whose subregion is already attached.
    pub fn from_records(records: Vec<TerritoryRecord>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.territory_id.clone(), i).is_some() {
                return Err(Error::Conflict(format!("duplicate territory `{}`", r.territory_id)));
            }
            if r.subregion.is_none() {
                return Err(Error::Completeness(format!("territory `{}` has no subregion", r.territory_id)));
            }
        }

        let ids = |pred: &dyn Fn(&TerritoryRecord) -> bool| -> Vec<String> {
            records.iter().filter(|r| pred(r)).map(|r| r.territory_id.clone()).collect()
        };

        let territory = Attribute {
            name: ATTR_TERRITORY.into(),
            strata: records
                .iter()
                .map(|r| Stratum {
                    name: r.territory_id.clone(),
                    members: StratumMembers::Territories {
                        territories: vec![r.territory_id.clone()],
                    },
                })
                .collect(),
        };

        let subregion_names: BTreeSet<&str> = records.iter().filter_map(|r| r.subregion.as_deref()).collect();
        let subregion = Attribute {
            name: ATTR_SUBREGION.into(),
            strata: subregion_names
                .iter()
                .map(|&s| Stratum {
                    name: s.to_string(),
                    members: StratumMembers::Territories {
                        territories: ids(&|r| r.subregion.as_deref() == Some(s)),
                    },
                })
                .collect(),
        };

        let income = Attribute {
            name: ATTR_INCOME.into(),
            strata: IncomeClass::ALL
                .iter()
                .map(|&c| (c, ids(&|r| r.income_class == Some(c))))
                .filter(|(_, members)| !members.is_empty())
                .map(|(c, territories)| Stratum {
                    name: c.as_str().to_string(),
                    members: StratumMembers::Territories { territories },
                })
                .collect(),
        };

        let landcover = Attribute {
            name: ATTR_LANDCOVER.into(),
            strata: vec![
                Stratum {
                    name: STRATUM_LAND.into(),
                    members: StratumMembers::Territories {
                        territories: ids(&|_| true),
                    },
                },
                Stratum {
                    name: STRATUM_WATER.into(),
                    members: StratumMembers::Complement {
                        complement_of: STRATUM_LAND.into(),
                    },
                },
            ],
        };

        Ok(Self {
            territories: records,
            index,
            attributes: vec![territory, subregion, income, landcover],
        })
    }

    pub fn territories(&self) -> &[TerritoryRecord] {
        &self.territories
    }

    pub fn territory(&self, id: &str) -> Option<&TerritoryRecord> {
        self.index.get(id).map(|&i| &self.territories[i])
    }

    pub fn territory_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// (attribute, number of strata) in catalog order.
    pub fn strata_counts(&self) -> Vec<(String, usize)> {
        self.attributes.iter().map(|a| (a.name.clone(), a.strata.len())).collect()
    }

    /// Number of member territories per income class, in enum order.
    pub fn income_class_counts(&self) -> Vec<(IncomeClass, usize)> {
        IncomeClass::ALL
            .iter()
            .map(|&c| (c, self.territories.iter().filter(|r| r.income_class == Some(c)).count()))
            .collect()
    }

    pub fn territories_with_income(&self) -> usize {
        self.territories.iter().filter(|r| r.income_class.is_some()).count()
    }

    fn geometry_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.territories {
            h.update(r.territory_id.as_bytes());
            h.update([0u8]);
            for poly in r.geometry.polygons() {
                for ring in poly.rings() {
                    h.update((ring.points().len() as u64).to_le_bytes());
                    for p in ring.points() {
                        h.update(p[0].to_le_bytes());
                        h.update(p[1].to_le_bytes());
                    }
                }
                h.update(b"|");
            }
        }
        hex(&h.finalize())
    }

    fn document(&self) -> CatalogDocument {
        CatalogDocument {
            version: 1,
            geometry_fingerprint: self.geometry_fingerprint(),
            territories: self
                .territories
                .iter()
                .map(|r| TerritoryEntry {
                    territory_id: r.territory_id.clone(),
                    display_name: r.display_name.clone(),
                    subregion: r.subregion.clone().unwrap_or_default(),
                    income_class: r.income_class,
                })
                .collect(),
            attributes: self.attributes.clone(),
        }
    }

    /// Canonical `catalog.json` document; geometries are referenced by id.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document()).expect("catalog serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical document (which embeds a geometry digest).
    pub fn fingerprint(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }

    /// Rebuilds a catalog from `catalog.json` and the boundary records it refers to.
    pub fn from_json(json: &str, mut records: Vec<TerritoryRecord>) -> Result<Self> {
        let doc: CatalogDocument = serde_json::from_str(json).map_err(|e| Error::Schema(format!("catalog.json: {e}")))?;
        let by_id: HashMap<&str, &TerritoryEntry> = doc.territories.iter().map(|t| (t.territory_id.as_str(), t)).collect();
        if records.len() != doc.territories.len() {
            return Err(Error::Fingerprint("catalog and boundary snapshot list different territories".into()));
        }
        for r in &mut records {
            let entry = by_id
                .get(r.territory_id.as_str())
                .ok_or_else(|| Error::Fingerprint(format!("territory `{}` absent from catalog", r.territory_id)))?;
            r.subregion = Some(entry.subregion.clone());
            r.income_class = entry.income_class;
        }
        let catalog = Self::from_records(records)?;
        if catalog.geometry_fingerprint() != doc.geometry_fingerprint {
            return Err(Error::Fingerprint("catalog geometry digest does not match boundaries".into()));
        }
        Ok(catalog)
    }
}

/// Loads a boundary snapshot directory: `*.geojson`, `subregions.csv`, `income.csv`.
pub fn load_snapshot(dir: &Path, strict: bool) -> Result<AttributeCatalog> {
    let records = load_boundaries(dir, strict)?;
    let tables = load_attribute_tables(&dir.join("subregions.csv"), &dir.join("income.csv"))?;
    build_catalog(records, &tables)
}

/// Expected properties of the full reference boundary snapshot.
pub mod reference {
    use super::*;

    pub const TERRITORY_STRATA: usize = 231;
    pub const SUBREGION_STRATA: usize = 23;
    pub const INCOME_STRATA: usize = 4;
    pub const LANDCOVER_STRATA: usize = 2;
    /// high, upper-middle, lower-middle, low
    pub const INCOME_CLASS_COUNTS: [usize; 4] = [76, 57, 45, 34];
    /// Stated count of territories with an income class. The per-class
    /// counts above sum to 212, so a faithful snapshot disagrees with one of
    /// the two figures.
    pub const TERRITORIES_WITH_INCOME: usize = 213;

    #[derive(Debug, Default, Clone, PartialEq)]
    pub struct SnapshotCheck {
        pub failures: Vec<String>,
        pub warnings: Vec<String>,
    }

    impl SnapshotCheck {
        pub fn passed(&self) -> bool {
            self.failures.is_empty()
        }
    }

    pub fn check(catalog: &AttributeCatalog) -> SnapshotCheck {
        let mut out = SnapshotCheck::default();
        let expected = [
            (ATTR_TERRITORY, TERRITORY_STRATA),
            (ATTR_SUBREGION, SUBREGION_STRATA),
            (ATTR_INCOME, INCOME_STRATA),
            (ATTR_LANDCOVER, LANDCOVER_STRATA),
        ];
        let counts: HashMap<String, usize> = catalog.strata_counts().into_iter().collect();
        for (attr, want) in expected {
            let got = counts.get(attr).copied().unwrap_or(0);
            if got != want {
                out.failures.push(format!("{attr}: {got} strata, expected {want}"));
            }
        }
        for ((class, got), want) in catalog.income_class_counts().into_iter().zip(INCOME_CLASS_COUNTS) {
            if got != want {
                out.failures.push(format!("income class {class}: {got} territories, expected {want}"));
            }
        }
        let with_income = catalog.territories_with_income();
        if with_income != TERRITORIES_WITH_INCOME {
            out.warnings.push(format!(
                "{with_income} territories carry an income class; the reference figure is {TERRITORIES_WITH_INCOME} \
                 while its per-class counts sum to {}",
                INCOME_CLASS_COUNTS.iter().sum::<usize>()
            ));
        }
        out
    }
}

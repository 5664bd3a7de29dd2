//! JSON game files shared by the three game models.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "quadratic" | "heterogeneous" | "clique",
//!   "persons": [{"dim": 1, "R": [[1.0]], "s": [0.0], "g": {"kind": ...}}],
//!   "edges": [{"i": 0, "j": 1, "W": [[1.0]]} | {"i": 0, "j": 1, "f": {...}, "A": [[1.0]], "B": [[-1.0]]}],
//!   "cliques": [[0, 1], [2]],
//!   "unsafe_indefinite": false
//! }
//! ```
//!
//! Quadratic games list `R`, `s` per person and `W` per ordered edge, so an
//! undirected edge appears twice. Heterogeneous and clique games carry
//! `g`, `R`, `s` for persons with an internal cost and `f`, `A`, `B` per
//! ordered pair. Reals are written as shortest round-trip decimals, so a
//! parse of an emitted file reproduces every matrix bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clique::CliqueGame;
use crate::cost_fn::CostFunction;
use crate::error::{Error, Result};
use crate::game::{HeterogeneousGame, InternalCost, OpinionGame, PairCost, Person, QuadraticGame};
use crate::linalg::rowmajor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Quadratic,
    Heterogeneous,
    Clique,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonRecord {
    pub dim: usize,
    #[serde(
        rename = "R",
        default,
        skip_serializing_if = "Option::is_none",
        with = "rowmajor::option"
    )]
    pub r: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<CostFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    #[serde(
        rename = "W",
        default,
        skip_serializing_if = "Option::is_none",
        with = "rowmajor::option"
    )]
    pub w: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<CostFunction>,
    #[serde(
        rename = "A",
        default,
        skip_serializing_if = "Option::is_none",
        with = "rowmajor::option"
    )]
    pub a: Option<DMatrix<f64>>,
    #[serde(
        rename = "B",
        default,
        skip_serializing_if = "Option::is_none",
        with = "rowmajor::option"
    )]
    pub b: Option<DMatrix<f64>>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Raw file contents before model validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub schema_version: u32,
    pub kind: GameKind,
    pub persons: Vec<PersonRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cliques: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub unsafe_indefinite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Game {
    Quadratic(QuadraticGame),
    Heterogeneous(HeterogeneousGame),
    Clique(CliqueGame),
}

impl Game {
    pub fn kind(&self) -> GameKind {
        match self {
            Game::Quadratic(_) => GameKind::Quadratic,
            Game::Heterogeneous(_) => GameKind::Heterogeneous,
            Game::Clique(_) => GameKind::Clique,
        }
    }

    pub fn from_json(text: &str) -> Result<Game> {
        let file: GameFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.into_game()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GameFile::from_game(self)?;
        let mut out = serde_json::to_string_pretty(&file).map_err(|e| Error::Schema(e.to_string()))?;
        out.push('\n');
        Ok(out)
    }
}

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Schema(msg.into()))
}

/// Model errors found while building a game from a file count as schema
/// errors.
fn as_schema<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Schema(m) => Error::Schema(m),
        other => Error::Schema(other.to_string()),
    })
}

impl GameFile {
    pub fn from_game(game: &Game) -> Result<GameFile> {
        match game {
            Game::Quadratic(q) => Ok(GameFile {
                schema_version: SCHEMA_VERSION,
                kind: GameKind::Quadratic,
                persons: (0..q.n())
                    .map(|i| PersonRecord {
                        dim: q.m(),
                        r: Some(q.r(i).clone()),
                        s: Some(q.s(i).as_slice().to_vec()),
                        g: None,
                    })
                    .collect(),
                edges: q
                    .edges()
                    .map(|(i, j, w)| EdgeRecord {
                        i,
                        j,
                        w: Some(w.clone()),
                        f: None,
                        a: None,
                        b: None,
                    })
                    .collect(),
                cliques: None,
                unsafe_indefinite: q.is_unsafe_indefinite(),
            }),
            Game::Heterogeneous(h) => Ok(heterogeneous_file(h, GameKind::Heterogeneous, None)),
            Game::Clique(c) => Ok(heterogeneous_file(
                c.base(),
                GameKind::Clique,
                Some(c.cliques().to_vec()),
            )),
        }
    }

    pub fn into_game(self) -> Result<Game> {
        if self.schema_version != SCHEMA_VERSION {
            return schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.cliques.is_some() != (self.kind == GameKind::Clique) {
            return schema("\"cliques\" is required for clique games and only for them");
        }
        if self.unsafe_indefinite && self.kind != GameKind::Quadratic {
            return schema("\"unsafe_indefinite\" applies to quadratic games only");
        }
        match self.kind {
            GameKind::Quadratic => self.into_quadratic().map(Game::Quadratic),
            GameKind::Heterogeneous => self.into_heterogeneous().map(Game::Heterogeneous),
            GameKind::Clique => {
                let cliques = self.cliques.clone().unwrap_or_default();
                let base = self.into_heterogeneous()?;
                as_schema(CliqueGame::new(base, cliques)).map(Game::Clique)
            }
        }
    }

    fn into_quadratic(self) -> Result<QuadraticGame> {
        let mut r = Vec::with_capacity(self.persons.len());
        let mut s = Vec::with_capacity(self.persons.len());
        for (i, p) in self.persons.into_iter().enumerate() {
            if p.g.is_some() {
                return schema(format!("person {i}: quadratic persons take no \"g\""));
            }
            let (Some(ri), Some(si)) = (p.r, p.s) else {
                return schema(format!("person {i}: quadratic persons need \"R\" and \"s\""));
            };
            if ri.shape() != (p.dim, p.dim) || si.len() != p.dim {
                return schema(format!("person {i}: \"R\" or \"s\" does not match dim {}", p.dim));
            }
            r.push(ri);
            s.push(DVector::from_vec(si));
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in self.edges {
            if e.f.is_some() || e.a.is_some() || e.b.is_some() {
                return schema(format!("edge ({}, {}): quadratic edges take only \"W\"", e.i, e.j));
            }
            let Some(w) = e.w else {
                return schema(format!("edge ({}, {}): missing \"W\"", e.i, e.j));
            };
            edges.push((e.i, e.j, w));
        }
        as_schema(if self.unsafe_indefinite {
            QuadraticGame::new_unsafe_indefinite(r, s, edges)
        } else {
            QuadraticGame::new(r, s, edges)
        })
    }

    fn into_heterogeneous(self) -> Result<HeterogeneousGame> {
        let mut persons = Vec::with_capacity(self.persons.len());
        for (i, p) in self.persons.into_iter().enumerate() {
            let internal = match (p.g, p.r, p.s) {
                (None, None, None) => None,
                (Some(g), Some(r), Some(s)) => Some(InternalCost {
                    g,
                    r,
                    s: DVector::from_vec(s),
                }),
                _ => return schema(format!("person {i}: \"g\", \"R\" and \"s\" go together")),
            };
            persons.push(Person { dim: p.dim, internal });
        }
        let mut pairs = Vec::with_capacity(self.edges.len());
        for e in self.edges {
            if e.w.is_some() {
                return schema(format!("edge ({}, {}): \"W\" belongs to quadratic games", e.i, e.j));
            }
            let (Some(f), Some(a), Some(b)) = (e.f, e.a, e.b) else {
                return schema(format!("edge ({}, {}): needs \"f\", \"A\" and \"B\"", e.i, e.j));
            };
            pairs.push((e.i, e.j, PairCost { f, a, b }));
        }
        as_schema(HeterogeneousGame::new(persons, pairs))
    }
}

fn heterogeneous_file(h: &HeterogeneousGame, kind: GameKind, cliques: Option<Vec<Vec<usize>>>) -> GameFile {
    GameFile {
        schema_version: SCHEMA_VERSION,
        kind,
        persons: h
            .persons()
            .iter()
            .map(|p| match &p.internal {
                Some(ic) => PersonRecord {
                    dim: p.dim,
                    r: Some(ic.r.clone()),
                    s: Some(ic.s.as_slice().to_vec()),
                    g: Some(ic.g.clone()),
                },
                None => PersonRecord {
                    dim: p.dim,
                    r: None,
                    s: None,
                    g: None,
                },
            })
            .collect(),
        edges: h
            .pairs()
            .map(|((i, j), pc)| EdgeRecord {
                i,
                j,
                w: None,
                f: Some(pc.f.clone()),
                a: Some(pc.a.clone()),
                b: Some(pc.b.clone()),
            })
            .collect(),
        cliques,
        unsafe_indefinite: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::quadratic_to_heterogeneous;
    use crate::lowerbound::{build_three_person, exp_tight_spec, no_nash_example, nonconvex_example};

    fn round_trip(g: Game) {
        let text = g.to_json().unwrap();
        let back = Game::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn quadratic_round_trip() {
        let q = QuadraticGame::scalar(&[1.0, 1.0 / 3.0], &[0.1, 1.0], &[(0, 1, std::f64::consts::PI)]).unwrap();
        round_trip(Game::Quadratic(q));
    }

    #[test]
    fn heterogeneous_round_trips() {
        round_trip(Game::Heterogeneous(build_three_person(&exp_tight_spec()).unwrap().game));
        round_trip(Game::Heterogeneous(nonconvex_example(0.125).unwrap()));
        let q = QuadraticGame::scalar(&[1.0, 2.0, 0.5], &[0.0, 1.0, -1.0], &[(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
        let h = quadratic_to_heterogeneous(&q).unwrap();
        round_trip(Game::Clique(CliqueGame::new(h, vec![vec![0, 2], vec![1]]).unwrap()));
    }

    #[test]
    fn unsafe_flag_survives() {
        let text = Game::Quadratic(no_nash_example()).to_json().unwrap();
        assert!(text.contains("\"unsafe_indefinite\": true"));
        match Game::from_json(&text).unwrap() {
            Game::Quadratic(q) => assert!(q.is_unsafe_indefinite()),
            other => panic!("wrong kind {:?}", other.kind()),
        }
    }

    #[test]
    fn malformed_files_are_schema_errors() {
        let bad = [
            "{",
            r#"{"schema_version": 1, "kind": "quadratic", "persons": [], "edges": [], "extra": 1}"#,
            r#"{"schema_version": 2, "kind": "quadratic", "persons": [], "edges": []}"#,
            r#"{"schema_version": 1, "kind": "quadratic", "persons": [{"dim": 1, "R": [[-1.0]], "s": [0.0]}], "edges": []}"#,
            r#"{"schema_version": 1, "kind": "quadratic", "persons": [{"dim": 2, "R": [[1.0]], "s": [0.0]}], "edges": []}"#,
            r#"{"schema_version": 1, "kind": "clique", "persons": [{"dim": 1}], "edges": []}"#,
            r#"{"schema_version": 1, "kind": "heterogeneous", "persons": [{"dim": 1, "g": {"kind": "exp", "inner": {"kind": "linear", "coeffs": [1.0], "offset": 0.0}}}], "edges": []}"#,
        ];
        for text in bad {
            assert!(matches!(Game::from_json(text), Err(Error::Schema(_))), "{text}");
        }
    }
}

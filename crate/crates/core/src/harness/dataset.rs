//! Dataset directories: `scenes/<id>.json` plus `refs.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_from_view, generate_scene, GenConfig, GroundTruthView};
use super::{mix_seed, HarnessError};
use crate::parser::{ParsedClues, ProgramMode};
use crate::scene::{load_scene, Scene};
use crate::vocab::ConceptVocabulary;

/// One line of `refs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefRecord {
    pub scene_id: String,
    pub utterance: String,
    pub target_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clues: Option<ParsedClues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ProgramMode>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub scenes: BTreeMap<String, Scene>,
    pub refs: Vec<RefRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn parse_refs(text: &str) -> Result<Vec<RefRecord>, HarnessError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| HarnessError::Refs {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn refs_jsonl(&self) -> String {
        self.refs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let refs = Self::parse_refs(&fs::read_to_string(dir.join("refs.jsonl"))?)?;
        let mut paths: Vec<_> = fs::read_dir(dir.join("scenes"))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
        paths.sort();
        let mut scenes = BTreeMap::new();
        for path in paths {
            let scene = load_scene(&fs::read_to_string(&path)?).map_err(|source| HarnessError::SceneFile {
                path: path.display().to_string(),
                source,
            })?;
            scenes.insert(scene.id.clone(), scene);
        }
        Ok(Dataset { scenes, refs })
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        let scene_dir = dir.join("scenes");
        fs::create_dir_all(&scene_dir)?;
        for (id, scene) in &self.scenes {
            fs::write(scene_dir.join(format!("{id}.json")), scene.to_json() + "\n")?;
        }
        fs::write(dir.join("refs.jsonl"), self.refs_jsonl())?;
        Ok(())
    }
}

const MAX_REDRAWS: u64 = 200;

/// `config.n_scenes` scenes with one utterance each. A scene without a
/// usable triple is redrawn with a fresh seed.
pub fn generate_dataset(config: &GenConfig, vocab: &ConceptVocabulary) -> Result<Dataset, HarnessError> {
    config.validate(vocab)?;
    let width = config.n_scenes.saturating_sub(1).to_string().len().max(4);
    let items: Vec<(Scene, RefRecord)> = (0..config.n_scenes)
        .into_par_iter()
        .map(|i| {
            let id = format!("scene_{i:0width$}");
            let base = mix_seed(config.seed, i as u64);
            for attempt in 0..MAX_REDRAWS {
                let seed = mix_seed(base, attempt);
                let scene = generate_scene(config, vocab, &id, seed)?;
                let view = GroundTruthView::new(&scene, vocab, &config.graph)?;
                match generate_from_view(&view, config, mix_seed(seed, 1)) {
                    Ok(r) => {
                        let record = RefRecord {
                            scene_id: id,
                            utterance: r.utterance,
                            target_id: r.target_id,
                            clues: Some(r.clues),
                            mode: Some(config.mode()),
                        };
                        return Ok((scene, record));
                    }
                    Err(HarnessError::NoUnambiguousTriple(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(HarnessError::NoUnambiguousTriple(id))
        })
        .collect::<Result<_, _>>()?;
    let mut dataset = Dataset::default();
    for (scene, record) in items {
        dataset.scenes.insert(scene.id.clone(), scene);
        dataset.refs.push(record);
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let v = ConceptVocabulary::builtin();
        let cfg = GenConfig {
            n_scenes: 5,
            seed: 3,
            ..GenConfig::default()
        };
        let d = generate_dataset(&cfg, &v).unwrap();
        assert_eq!(d.len(), 5);
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.refs, d.refs);
        assert_eq!(back.scenes.len(), 5);
        for (id, s) in &d.scenes {
            assert_eq!(back.scenes[id].to_json(), s.to_json());
        }
        assert_eq!(generate_dataset(&cfg, &v).unwrap(), d);
    }

    #[test]
    fn refs_errors_carry_line_numbers() {
        let text = "{\"scene_id\": \"a\", \"utterance\": \"the lamp\", \"target_id\": \"o1\"}\n\nnot json\n";
        match Dataset::parse_refs(text) {
            Err(HarnessError::Refs { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}

//! Per-session engine state with bounded undo.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use gsseg_core::autoseg::{MaskProvider, Segmentation};
use gsseg_core::{GaussianScene, Mask2D, Selection3D};

pub const UNDO_DEPTH: usize = 32;

/// A finished autoseg run and what is needed to correct it.
pub struct JobEntry {
    pub segmentation: Segmentation,
    pub provider: Arc<dyn MaskProvider>,
}

/// Everything an undo step restores. Scenes and jobs are shared, so a
/// snapshot costs one mask and one bitset.
#[derive(Clone)]
pub struct State {
    pub scene: Arc<GaussianScene>,
    pub mask: Option<Mask2D>,
    pub selection: Selection3D,
    /// Extra user masks for the next autoseg run, in order.
    pub references: Vec<Mask2D>,
    pub jobs: BTreeMap<String, Arc<JobEntry>>,
}

pub struct Session {
    pub id: String,
    pub state: State,
    undo: VecDeque<State>,
    redo: Vec<State>,
    next_job: u64,
}

impl Session {
    pub fn new(id: String, scene: GaussianScene) -> Self {
        let n = scene.len();
        Self {
            id,
            state: State {
                scene: Arc::new(scene),
                mask: None,
                selection: Selection3D::empty(n),
                references: Vec::new(),
                jobs: BTreeMap::new(),
            },
            undo: VecDeque::new(),
            redo: Vec::new(),
            next_job: 1,
        }
    }

    /// Replaces the state, keeping the old one for undo.
    pub fn commit(&mut self, next: State) {
        debug_assert_eq!(next.selection.len(), next.scene.len());
        let prev = std::mem::replace(&mut self.state, next);
        if self.undo.len() == UNDO_DEPTH {
            self.undo.pop_front();
        }
        self.undo.push_back(prev);
        self.redo.clear();
    }

    pub fn undo(&mut self) -> bool {
        match self.undo.pop_back() {
            Some(prev) => {
                self.redo.push(std::mem::replace(&mut self.state, prev));
                true
            }
            None => false,
        }
    }

    pub fn redo(&mut self) -> bool {
        match self.redo.pop() {
            Some(next) => {
                self.undo
                    .push_back(std::mem::replace(&mut self.state, next));
                true
            }
            None => false,
        }
    }

    pub fn undo_len(&self) -> usize {
        self.undo.len()
    }

    pub fn redo_len(&self) -> usize {
        self.redo.len()
    }

    /// Job ids are never reused, even after undo.
    pub fn allocate_job_id(&mut self) -> String {
        let id = format!("job-{}", self.next_job);
        self.next_job += 1;
        id
    }
}

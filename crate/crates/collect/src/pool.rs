//! Waiting workers and the image work queue.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::session::ImageItem;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("worker is already in a session")]
    AlreadyActive,
    #[error("worker is already waiting")]
    AlreadyWaiting,
}

/// Workers waiting for a partner, in join order, and workers in sessions.
#[derive(Debug, Default)]
pub struct WorkerPool {
    waiting: VecDeque<(String, u64)>,
    active: HashSet<String>,
}

impl WorkerPool {
    pub fn enqueue(&mut self, worker_id: &str, now_ms: u64) -> Result<(), PoolError> {
        if self.active.contains(worker_id) {
            return Err(PoolError::AlreadyActive);
        }
        if self.is_waiting(worker_id) {
            return Err(PoolError::AlreadyWaiting);
        }
        self.waiting.push_back((worker_id.to_string(), now_ms));
        Ok(())
    }

    pub fn is_waiting(&self, worker_id: &str) -> bool {
        self.waiting.iter().any(|(w, _)| w == worker_id)
    }

    pub fn is_active(&self, worker_id: &str) -> bool {
        self.active.contains(worker_id)
    }

    /// Removes a waiting worker; false if it was not waiting.
    pub fn remove_waiting(&mut self, worker_id: &str) -> bool {
        let before = self.waiting.len();
        self.waiting.retain(|(w, _)| w != worker_id);
        before != self.waiting.len()
    }

    /// Takes the two longest-waiting workers and marks them active.
    pub fn pop_pair(&mut self) -> Option<(String, String)> {
        if self.waiting.len() < 2 {
            return None;
        }
        let (a, _) = self.waiting.pop_front()?;
        let (b, _) = self.waiting.pop_front()?;
        debug_assert_ne!(a, b);
        self.active.insert(a.clone());
        self.active.insert(b.clone());
        Some((a, b))
    }

    pub fn release(&mut self, worker_id: &str) {
        self.active.remove(worker_id);
    }

    pub fn waiting_len(&self) -> usize {
        self.waiting.len()
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }
}

/// Unserved images in arrival order, plus leases held by live sessions.
#[derive(Debug, Default)]
pub struct ImageQueue {
    unserved: VecDeque<ImageItem>,
    leased: HashMap<String, ImageItem>,
    served: HashSet<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ImageCounts {
    pub unserved: usize,
    pub leased: usize,
    pub served: usize,
}

impl ImageQueue {
    /// Queues images not already known; returns how many were new.
    pub fn add(&mut self, images: impl IntoIterator<Item = ImageItem>) -> usize {
        let mut added = 0;
        for img in images {
            let id = &img.image_id;
            if self.served.contains(id)
                || self.leased.contains_key(id)
                || self.unserved.iter().any(|u| &u.image_id == id)
            {
                continue;
            }
            self.unserved.push_back(img);
            added += 1;
        }
        added
    }

    pub fn mark_served_externally(&mut self, image_id: &str) {
        self.unserved.retain(|u| u.image_id != image_id);
        self.served.insert(image_id.to_string());
    }

    pub fn has_unserved(&self) -> bool {
        !self.unserved.is_empty()
    }

    pub fn lease(&mut self) -> Option<ImageItem> {
        let img = self.unserved.pop_front()?;
        self.leased.insert(img.image_id.clone(), img.clone());
        Some(img)
    }

    /// Lease ends with a completed dialog.
    pub fn serve(&mut self, image_id: &str) -> bool {
        if self.leased.remove(image_id).is_some() {
            self.served.insert(image_id.to_string());
            true
        } else {
            false
        }
    }

    /// Lease ends without a dialog; the image goes to the back of the queue.
    pub fn requeue(&mut self, image_id: &str) -> bool {
        match self.leased.remove(image_id) {
            Some(img) => {
                self.unserved.push_back(img);
                true
            }
            None => false,
        }
    }

    pub fn counts(&self) -> ImageCounts {
        ImageCounts { unserved: self.unserved.len(), leased: self.leased.len(), served: self.served.len() }
    }

    pub fn is_served(&self, image_id: &str) -> bool {
        self.served.contains(image_id)
    }

    pub fn is_leased(&self, image_id: &str) -> bool {
        self.leased.contains_key(image_id)
    }
}

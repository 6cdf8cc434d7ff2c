use std::collections::BTreeMap;

use crate::error::SimError;
use crate::groups::{DeviceId, PreambleSet};

/// Forced preamble choices for deterministic replays. Keys are
/// (device, attempt) with attempts counted from 1.
///
/// `absolute` pins the exact preamble ID; `nth` pins the index within
/// whatever pool the device is offered at that attempt (useful when the
/// pool itself depends on earlier random outcomes). A device/attempt pair
/// not covered by the script falls back to the uniform draw.
#[derive(Debug, Clone, Default)]
pub struct PreambleScript {
    absolute: BTreeMap<(DeviceId, u32), u16>,
    nth: BTreeMap<(DeviceId, u32), u16>,
}

impl PreambleScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_absolute(&mut self, device: DeviceId, attempt: u32, preamble: u16) -> &mut Self {
        self.absolute.insert((device, attempt), preamble);
        self
    }

    pub fn set_nth(&mut self, device: DeviceId, attempt: u32, index: u16) -> &mut Self {
        self.nth.insert((device, attempt), index);
        self
    }

    /// Scripted choice for this attempt, if any. `absolute` wins over `nth`.
    pub fn choose(
        &self,
        device: DeviceId,
        attempt: u32,
        pool: &PreambleSet,
    ) -> Option<Result<u16, SimError>> {
        if let Some(&preamble) = self.absolute.get(&(device, attempt)) {
            if !pool.contains(preamble) {
                return Some(Err(SimError::ScriptViolation(format!(
                    "device {device} attempt {attempt}: preamble {preamble} not in offered pool \
                     [{}, {})",
                    pool.start,
                    pool.start + pool.len
                ))));
            }
            return Some(Ok(preamble));
        }
        if let Some(&index) = self.nth.get(&(device, attempt)) {
            if index >= pool.len {
                return Some(Err(SimError::ScriptViolation(format!(
                    "device {device} attempt {attempt}: pool index {index} out of {}",
                    pool.len
                ))));
            }
            return Some(Ok(pool.start + index));
        }
        None
    }
}

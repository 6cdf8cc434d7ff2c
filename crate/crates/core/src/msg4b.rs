use crate::error::CodecError;

/// Collision feedback record: tells the devices that sent `preamble_id` in the
/// MSG3 subframe `sfn_offset` subframes ago to re-contend in the TRAO
/// `trao_offset` subframes ahead, using preamble group `group_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Msg4b {
    pub sfn_offset: u16,
    pub preamble_id: u16,
    pub trao_offset: u16,
    pub group_index: u16,
}

pub const SFN_OFFSET_BITS: u32 = 7;
pub const PREAMBLE_ID_BITS: u32 = 6;
pub const TRAO_OFFSET_BITS: u32 = 7;
pub const GROUP_INDEX_BITS: u32 = 5;
pub const MSG4B_TOTAL_BITS: u32 =
    SFN_OFFSET_BITS + PREAMBLE_ID_BITS + TRAO_OFFSET_BITS + GROUP_INDEX_BITS;

fn check(field: &'static str, value: u16, bits: u32) -> Result<u32, CodecError> {
    let max = (1u16 << bits) - 1;
    if value > max {
        return Err(CodecError::OverflowError { field, value, max });
    }
    Ok(value as u32)
}

/// Packs the four fields big-endian (sfn_offset first) into the low 25 bits.
pub fn encode_msg4b(m: Msg4b) -> Result<u32, CodecError> {
    let sfn = check("sfn_offset", m.sfn_offset, SFN_OFFSET_BITS)?;
    let preamble = check("preamble_id", m.preamble_id, PREAMBLE_ID_BITS)?;
    let trao = check("trao_offset", m.trao_offset, TRAO_OFFSET_BITS)?;
    let group = check("group_index", m.group_index, GROUP_INDEX_BITS)?;
    Ok(sfn << (PREAMBLE_ID_BITS + TRAO_OFFSET_BITS + GROUP_INDEX_BITS)
        | preamble << (TRAO_OFFSET_BITS + GROUP_INDEX_BITS)
        | trao << GROUP_INDEX_BITS
        | group)
}

pub fn decode_msg4b(word: u32) -> Msg4b {
    let mask = |bits: u32| (1u32 << bits) - 1;
    Msg4b {
        sfn_offset: (word >> (PREAMBLE_ID_BITS + TRAO_OFFSET_BITS + GROUP_INDEX_BITS)
            & mask(SFN_OFFSET_BITS)) as u16,
        preamble_id: (word >> (TRAO_OFFSET_BITS + GROUP_INDEX_BITS) & mask(PREAMBLE_ID_BITS))
            as u16,
        trao_offset: (word >> GROUP_INDEX_BITS & mask(TRAO_OFFSET_BITS)) as u16,
        group_index: (word & mask(GROUP_INDEX_BITS)) as u16,
    }
}

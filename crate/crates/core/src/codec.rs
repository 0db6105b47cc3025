//! Weight serialization and session key extraction.
//!
//! Each weight packs into one byte: the MSB carries the sign (1 = negative)
//! and the low seven bits the magnitude. The active layer serializes
//! row-major into key material that is cut into 128-bit groups.

use crate::error::{param, Error, Result};
use crate::tpm::{Evaluation, TpmNetwork};

pub const KEY_BYTES: usize = 16;
pub const KEY_BITS: usize = KEY_BYTES * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WeightByte(pub u8);

pub fn encode_weight(w: i16) -> Result<WeightByte> {
    if !(-127..=127).contains(&w) {
        return Err(Error::Range(format!("weight {w} does not fit 7 magnitude bits")));
    }
    let sign = if w < 0 { 0x80 } else { 0 };
    Ok(WeightByte(sign | w.unsigned_abs() as u8))
}

/// Total inverse of [`encode_weight`]; `0x80` reads as zero.
pub fn decode_weight(b: WeightByte) -> i16 {
    let magnitude = (b.0 & 0x7f) as i16;
    if b.0 & 0x80 != 0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Serialized active-layer weights, MSB-first within each byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyMaterial {
    bytes: Vec<u8>,
}

impl KeyMaterial {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn bit(&self, index: usize) -> bool {
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    /// Number of whole 128-bit groups.
    pub fn group_count(&self) -> usize {
        self.bytes.len() / KEY_BYTES
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.bytes)
    }
}

/// A 128-bit key and the group it was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey {
    pub key: [u8; KEY_BYTES],
    pub iv: u8,
}

impl SessionKey {
    pub fn to_hex(&self) -> String {
        to_hex(&self.key)
    }
}

pub fn serialize_weights(net: &TpmNetwork) -> KeyMaterial {
    // depth is capped at 127 by TpmParams, so every weight encodes
    let bytes = net.weights().iter().map(|&w| encode_weight(w as i16).expect("depth bounded by 127").0).collect();
    KeyMaterial { bytes }
}

pub fn extract_key(material: &KeyMaterial, iv: u8) -> Result<SessionKey> {
    let start = iv as usize * KEY_BYTES;
    let end = start + KEY_BYTES;
    if end > material.bytes.len() {
        return Err(Error::Range(format!("index vector {iv} outside {} available groups", material.group_count())));
    }
    let mut key = [0u8; KEY_BYTES];
    key.copy_from_slice(&material.bytes[start..end]);
    Ok(SessionKey { key, iv })
}

/// Key for data frame `index` after establishment. Groups are used in turn,
/// starting from the negotiated one, so consecutive frames get different keys.
pub fn frame_key(material: &KeyMaterial, session: &SessionKey, index: u64) -> Result<SessionKey> {
    let groups = material.group_count() as u64;
    if groups == 0 {
        return Err(Error::Range("no complete key group".into()));
    }
    extract_key(material, ((session.iv as u64 + index) % groups) as u8)
}

/// The first 128 serialized bits, used as the synchronization-test key.
pub fn leading_key(net: &TpmNetwork) -> Result<[u8; KEY_BYTES]> {
    extract_key(&serialize_weights(net), 0).map(|k| k.key)
}

/// Hidden outputs as a bit block: bit `i` is set iff `σ_i = +1`.
pub fn hidden_output_key<T>(eval: &Evaluation<T>) -> Vec<bool> {
    eval.sigmas.iter().map(|&s| s == 1).collect()
}

/// Symmetric block transform keyed by a session key.
pub trait BlockCipher {
    fn encrypt(&self, key: &[u8], block: &[u8]) -> Result<Vec<u8>>;
    fn decrypt(&self, key: &[u8], block: &[u8]) -> Result<Vec<u8>>;
}

/// One-time-pad XOR.
#[derive(Debug, Clone, Copy, Default)]
pub struct Otp;

impl BlockCipher for Otp {
    fn encrypt(&self, key: &[u8], block: &[u8]) -> Result<Vec<u8>> {
        otp_transform(key, block)
    }

    fn decrypt(&self, key: &[u8], block: &[u8]) -> Result<Vec<u8>> {
        otp_transform(key, block)
    }
}

pub fn otp_transform(key: &[u8], block: &[u8]) -> Result<Vec<u8>> {
    if key.len() != block.len() {
        return Err(param(format!("key is {} bytes, block is {}", key.len(), block.len())));
    }
    Ok(key.iter().zip(block).map(|(k, b)| k ^ b).collect())
}

/// Fixed-size XOR for the 16-byte fields carried in frames.
pub fn otp_block(key: &[u8; KEY_BYTES], block: &[u8; KEY_BYTES]) -> [u8; KEY_BYTES] {
    core::array::from_fn(|i| key[i] ^ block[i])
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return Err(param("hex string has odd length"));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| param(format!("bad hex digit in '{s}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::tpm::TpmParams;

    #[test]
    fn weight_byte_examples() {
        assert_eq!(encode_weight(0).unwrap(), WeightByte(0b0000_0000));
        assert_eq!(encode_weight(-5).unwrap(), WeightByte(0b1000_0101));
        assert_eq!(encode_weight(127).unwrap(), WeightByte(0b0111_1111));
        assert_eq!(encode_weight(-127).unwrap(), WeightByte(0b1111_1111));
        assert!(encode_weight(128).is_err());
        assert!(encode_weight(-128).is_err());
        assert_eq!(decode_weight(WeightByte(0b1000_0101)), -5);
        assert_eq!(decode_weight(WeightByte(0x80)), 0);
    }

    #[test]
    fn weight_round_trip_is_exhaustive() {
        for w in -127..=127 {
            assert_eq!(decode_weight(encode_weight(w).unwrap()), w);
        }
        for b in 0..=255u8 {
            if b != 0x80 {
                assert_eq!(encode_weight(decode_weight(WeightByte(b))).unwrap().0, b);
            }
        }
    }

    fn sample_net(l: u8, seed: u64) -> TpmNetwork {
        TpmNetwork::init(TpmParams::new(3, 32, l).unwrap(), &mut RngState::from_u64(seed)).unwrap()
    }

    #[test]
    fn standard_layout_has_six_groups() {
        let m = serialize_weights(&sample_net(127, 1));
        assert_eq!(m.bit_len(), 768);
        assert_eq!(m.group_count(), 6);
        assert!(extract_key(&m, 6).is_err());
        let last = extract_key(&m, 5).unwrap();
        assert_eq!(&last.key[..], &m.as_bytes()[80..96]);
    }

    #[test]
    fn first_group_is_first_sixteen_weights() {
        let net = sample_net(5, 2);
        let m = serialize_weights(&net);
        let k = extract_key(&m, 0).unwrap();
        for (i, b) in k.key.iter().enumerate() {
            assert_eq!(decode_weight(WeightByte(*b)), net.weights()[i] as i16);
        }
    }

    #[test]
    fn groups_partition_material() {
        let m = serialize_weights(&sample_net(9, 3));
        let joined: Vec<u8> = (0..m.group_count() as u8).flat_map(|iv| extract_key(&m, iv).unwrap().key).collect();
        assert_eq!(joined, m.as_bytes());
    }

    #[test]
    fn zero_weights_serialize_to_zero_bits() {
        let p = TpmParams::new(3, 32, 1).unwrap();
        let net = TpmNetwork::from_weights(p, vec![0; 96]).unwrap();
        let m = serialize_weights(&net);
        assert!((0..m.bit_len()).all(|i| !m.bit(i)));
        assert_eq!(m, serialize_weights(&net));
    }

    #[test]
    fn bits_are_msb_first() {
        let p = TpmParams::new(1, 1, 5).unwrap();
        let net = TpmNetwork::from_weights(p, vec![-5]).unwrap();
        let m = serialize_weights(&net);
        let bits: Vec<bool> = (0..8).map(|i| m.bit(i)).collect();
        assert_eq!(bits, vec![true, false, false, false, false, true, false, true]);
    }

    #[test]
    fn hidden_output_block() {
        let e = Evaluation::<f64> { fields: vec![0.0; 8], sigmas: vec![1, -1, -1, 1, -1, 1, -1, 1], tau: 1 };
        let bits: String = hidden_output_key(&e).iter().map(|&b| if b { '1' } else { '0' }).collect();
        assert_eq!(bits, "10010101");
        let ones = Evaluation::<f64> { fields: vec![1.0; 3], sigmas: vec![1; 3], tau: 1 };
        assert_eq!(hidden_output_key(&ones), vec![true; 3]);
    }

    #[test]
    fn otp_properties() {
        let mut rng = RngState::from_u64(10);
        let zero = [0u8; 16];
        for _ in 0..100 {
            let k = rng.bytes16();
            let m = rng.bytes16();
            let c = otp_transform(&k, &m).unwrap();
            assert_eq!(otp_transform(&k, &c).unwrap(), m);
            assert_eq!(otp_transform(&zero, &m).unwrap(), m);
            assert_eq!(Otp.decrypt(&k, &Otp.encrypt(&k, &m).unwrap()).unwrap(), m);
        }
        assert!(otp_transform(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn wrong_key_does_not_recover_plaintext() {
        let mut rng = RngState::from_u64(12);
        let st = rng.bytes16();
        let key = rng.bytes16();
        let ct = otp_block(&key, &st);
        for _ in 0..1000 {
            let wrong = rng.bytes16();
            if wrong != key {
                assert_ne!(otp_block(&wrong, &ct), st);
            }
        }
    }

    #[test]
    fn frame_keys_rotate_through_groups() {
        let material = serialize_weights(&sample_net(3, 4));
        let session = extract_key(&material, 4).unwrap();
        let ivs: Vec<u8> = (0..8).map(|i| frame_key(&material, &session, i).unwrap().iv).collect();
        assert_eq!(ivs, vec![4, 5, 0, 1, 2, 3, 4, 5]);
        assert_eq!(frame_key(&material, &session, 0).unwrap(), session);
    }

    #[test]
    fn hex_round_trip() {
        assert_eq!(to_hex(&[0x00, 0xab, 0x7f]), "00ab7f");
        assert_eq!(from_hex("00ab7f").unwrap(), vec![0x00, 0xab, 0x7f]);
        assert!(from_hex("abc").is_err());
        assert!(from_hex("zz").is_err());
    }
}

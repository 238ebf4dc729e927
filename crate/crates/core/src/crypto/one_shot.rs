//! AES-128 encryption of one block under a key that is never reused.
//!
//! Every seal and every filter check derives a fresh key, so the key schedule
//! is paid once per block. With AES-NI the schedule is interleaved with the
//! rounds and its S-box step runs through `aesenclast` (a byte shuffle turns
//! ShiftRows into the RotWord of the last column) instead of `aeskeygenassist`,
//! which has poor throughput on most cores.

use super::BLOCK_LEN;

#[cfg(all(target_arch = "x86_64", target_feature = "aes", target_feature = "ssse3"))]
#[inline]
pub(crate) fn encrypt(key: &[u8; BLOCK_LEN], block: &[u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    use std::arch::x86_64::*;

    // SAFETY: the required target features are enabled at compile time;
    // `__m128i` and `[u8; 16]` have the same size and no invalid bit patterns.
    unsafe {
        let rot_word = _mm_set1_epi32(0x0c0f0e0d);
        let mut k: __m128i = std::mem::transmute(*key);
        let mut s = _mm_xor_si128(std::mem::transmute::<[u8; BLOCK_LEN], __m128i>(*block), k);
        let mut rcon = 1;
        for round in 1..=10 {
            let sub = _mm_aesenclast_si128(_mm_shuffle_epi8(k, rot_word), _mm_set1_epi32(rcon));
            rcon = if rcon == 0x80 { 0x1b } else { rcon << 1 };
            let mut x = _mm_xor_si128(k, _mm_slli_si128::<4>(k));
            x = _mm_xor_si128(x, _mm_slli_si128::<8>(x));
            k = _mm_xor_si128(x, sub);
            s = if round == 10 { _mm_aesenclast_si128(s, k) } else { _mm_aesenc_si128(s, k) };
        }
        std::mem::transmute(s)
    }
}

#[cfg(not(all(target_arch = "x86_64", target_feature = "aes", target_feature = "ssse3")))]
#[inline]
pub(crate) fn encrypt(key: &[u8; BLOCK_LEN], block: &[u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    use aes::cipher::{BlockEncrypt, KeyInit};

    let mut b = aes::Block::from(*block);
    aes::Aes128Enc::new(key.into()).encrypt_block(&mut b);
    b.into()
}

use proptest::prelude::*;
use qanon_core::amd::{self, chunk_layout, AmdParams, Decoded};
use qanon_core::bits::{self, Bits};
use qanon_core::gf2::BinPoly;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn bits_of(v: &[u8]) -> Bits {
    v.iter().map(|&b| b == 1).collect()
}

fn random_bits(rng: &mut impl Rng, len: usize) -> Bits {
    (0..len).map(|_| rng.gen::<bool>()).collect()
}

fn all_words(len: usize) -> impl Iterator<Item = Bits> {
    (0u32..1 << len).map(move |w| (0..len).map(|i| w >> (len - 1 - i) & 1 == 1).collect())
}

#[test]
fn reference_vectors() {
    let text = include_str!("data/amd_vectors.txt");
    let mut lines = 0;
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let (m, beta): (usize, u32) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let p = AmdParams::derive(m, beta).unwrap();
        assert_eq!(p.d, f[2].parse::<usize>().unwrap(), "{line}");
        assert_eq!(p.gamma, f[3].parse::<u32>().unwrap(), "{line}");
        assert_eq!(p.ctx.modulus(), BinPoly::from_hex(f[4]).unwrap(), "{line}");
        let g = p.gamma as usize;
        let mu = bits::from_hex(f[5], m).unwrap();
        let theta = bits::from_hex(f[6], g).unwrap();
        let tau = bits::from_hex(f[7], g).unwrap();
        assert_eq!(amd::tag(&mu, &theta, &p).unwrap(), tau, "{line}");
        let word = amd::encode(&mu, &p, &theta).unwrap().to_bits();
        assert_eq!(amd::decode(&word, &p).unwrap(), Decoded::Valid(mu));
        lines += 1;
    }
    assert_eq!(lines, 50);
}

/// The toy tag evaluated symbolically: with d = 1 and modulus x²+x+1,
/// f = θ³ + μ·θ, and every nonzero θ in GF(4) has θ³ = 1.
#[test]
fn toy_tag_symbolic() {
    let p = AmdParams::derive(2, 1).unwrap();
    assert_eq!((p.d, p.gamma), (1, 2));
    assert_eq!(p.ctx.modulus().to_string(), "x^2+x+1");
    // multiplication table of GF(4) = {0, 1, x, x+1} as indices 0..4
    let mul = |a: usize, b: usize| -> usize {
        const LOG: [usize; 4] = [usize::MAX, 0, 1, 2];
        const EXP: [usize; 3] = [1, 2, 3];
        if a == 0 || b == 0 {
            0
        } else {
            EXP[(LOG[a] + LOG[b]) % 3]
        }
    };
    for mu in 0..4usize {
        for theta in 0..4usize {
            let cube = mul(theta, mul(theta, theta));
            let expected = cube ^ mul(mu, theta);
            let got = amd::tag(&bits_of(&[(mu >> 1) as u8, (mu & 1) as u8]), &bits_of(&[(theta >> 1) as u8, (theta & 1) as u8]), &p).unwrap();
            assert_eq!(got, bits_of(&[(expected >> 1) as u8, (expected & 1) as u8]), "mu={mu} theta={theta}");
        }
    }
    assert_eq!(amd::tag(&bits_of(&[1, 1]), &bits_of(&[0, 1]), &p).unwrap(), bits_of(&[1, 0]));
}

#[test]
fn zero_input_gives_zero_tag() {
    let p = AmdParams::derive(1024, 16).unwrap();
    let tag = amd::tag(&Bits::repeat(false, 1024), &Bits::repeat(false, 22), &p).unwrap();
    assert!(tag.not_any());
}

#[test]
fn worked_sizes() {
    let p = AmdParams::derive(1024, 16).unwrap();
    assert_eq!((p.d, p.gamma, p.encoded_len()), (49, 22, 1068));
    assert_eq!(p.ctx.modulus().to_string(), "x^22+x+1");
    let p = AmdParams::derive(512, 16).unwrap();
    assert_eq!((p.gamma, p.encoded_len()), (21, 554));
    let explicit = AmdParams::with_modulus(1024, 16, "x^22+x+1".parse().unwrap()).unwrap();
    assert_eq!(explicit.ctx.modulus(), p_mod22());
    assert!(AmdParams::with_modulus(1024, 16, "x^21+x^2+1".parse().unwrap()).is_err());
    assert!(AmdParams::with_modulus(1024, 16, "x^22+1".parse().unwrap()).is_err());
}

fn p_mod22() -> BinPoly {
    "x^22+x+1".parse().unwrap()
}

#[test]
fn layout_invariants_and_gamma_bound() {
    for beta in 1..=24u32 {
        for m in (1..=4096).step_by(7) {
            let (d, gamma) = chunk_layout(m, beta);
            assert_eq!(d % 2, 1);
            assert!(d * gamma as usize >= m);
            // γ never exceeds β + log2(m+1), and stays strictly below it
            // unless that bound is itself an integer (m = 1, or m = 3 at β = 1)
            let bound = beta as f64 + ((m + 1) as f64).log2();
            assert!((gamma as f64) <= bound);
            if bound.fract() != 0.0 {
                assert!((gamma as f64) < bound, "m={m} beta={beta}");
            }
            assert!(d as f64 * (beta as f64 + ((d + 1) as f64).log2()) >= m as f64);
            if d > 1 {
                let e = d - 2;
                assert!((e as f64) * (beta as f64 + ((e + 1) as f64).log2()) < m as f64);
            }
        }
    }
}

#[test]
fn efficiency_monotone_in_m() {
    let effs: Vec<f64> = (6..=16).map(|k| AmdParams::derive(1 << k, 16).unwrap().efficiency()).collect();
    assert!(effs.windows(2).all(|w| w[0] < w[1]), "{effs:?}");
}

/// For every parameter set small enough to enumerate, every message and
/// every nonzero offset: the fraction of θ for which the offset goes
/// undetected is at most 2^-β.
#[test]
fn exhaustive_tamper_detection_small_codes() {
    let word = |v: &Bits| v.iter().by_vals().fold(0usize, |acc, b| acc << 1 | b as usize);
    let mut checked = 0;
    for beta in 1..=4u32 {
        for m in 1..=12usize {
            let p = AmdParams::derive(m, beta).unwrap();
            let len = p.encoded_len();
            if len > 16 {
                continue;
            }
            let g = p.gamma as usize;
            // tags[μ][θ] as integers, MSB-first
            let tags: Vec<Vec<usize>> = all_words(m)
                .map(|mu| all_words(g).map(|t| word(&amd::tag(&mu, &t, &p).unwrap())).collect())
                .collect();
            let limit = (1usize << g) >> beta;
            for mu in 0..1usize << m {
                for e in 1usize..1 << len {
                    let (e_mu, e_theta, e_tau) = (e >> (2 * g), e >> g & ((1 << g) - 1), e & ((1 << g) - 1));
                    let undetected = (0..1usize << g)
                        .filter(|&t| tags[mu ^ e_mu][t ^ e_theta] == tags[mu][t] ^ e_tau)
                        .count();
                    assert!(undetected <= limit, "m={m} beta={beta} mu={mu:b} offset={e:b}: {undetected}");
                }
            }
            checked += 1;
        }
    }
    assert!(checked >= 4, "only {checked} parameter sets enumerated");
}

/// Cross-check of the table form above against the real decoder at the
/// smallest size.
#[test]
fn toy_tamper_detection_through_decoder() {
    let p = AmdParams::derive(2, 1).unwrap();
    let (mut undetected, mut total) = (0, 0);
    for msg in all_words(2) {
        for theta in all_words(2) {
            let w = amd::encode(&msg, &p, &theta).unwrap().to_bits();
            for e in all_words(6).skip(1) {
                total += 1;
                if matches!(amd::decode(&(w.clone() ^ &e), &p).unwrap(), Decoded::Valid(_)) {
                    undetected += 1;
                }
            }
        }
    }
    assert_eq!(total, 16 * 63);
    assert!(undetected * 2 <= total, "{undetected}/{total}");
}

#[test]
fn round_trip_at_1024() {
    let p = AmdParams::derive(1024, 16).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1024);
    for _ in 0..1000 {
        let msg = random_bits(&mut rng, 1024);
        let theta = random_bits(&mut rng, 22);
        let enc = amd::encode(&msg, &p, &theta).unwrap();
        assert_eq!(enc.len(), 1068);
        assert_eq!(amd::decode(&enc.to_bits(), &p).unwrap(), Decoded::Valid(msg));
    }
}

#[test]
fn different_theta_different_codeword_same_message() {
    let p = AmdParams::derive(64, 8).unwrap();
    let msg = bits_of(&[1; 64]);
    let a = amd::encode(&msg, &p, &Bits::repeat(false, p.gamma as usize)).unwrap().to_bits();
    let b = amd::encode(&msg, &p, &Bits::repeat(true, p.gamma as usize)).unwrap().to_bits();
    assert_ne!(a, b);
    assert_eq!(amd::decode(&a, &p).unwrap(), amd::decode(&b, &p).unwrap());
}

#[test]
fn length_mismatches_are_errors() {
    let p = AmdParams::derive(16, 4).unwrap();
    assert!(amd::encode(&Bits::repeat(false, 15), &p, &Bits::repeat(false, p.gamma as usize)).is_err());
    assert!(amd::encode(&Bits::repeat(false, 16), &p, &Bits::repeat(false, 1)).is_err());
    assert!(amd::decode(&Bits::repeat(false, 3), &p).is_err());
    assert!(AmdParams::derive(0, 4).is_err());
    assert!(AmdParams::derive(4, 0).is_err());
}

proptest! {
    #[test]
    fn tag_is_affine_in_mu(seed: u64, m in 1usize..300, beta in 1u32..20) {
        let p = AmdParams::derive(m, beta).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (a, b) = (random_bits(&mut rng, m), random_bits(&mut rng, m));
        let theta = random_bits(&mut rng, p.gamma as usize);
        let t = |mu: &Bits| amd::tag(mu, &theta, &p).unwrap();
        let zero = Bits::repeat(false, m);
        prop_assert_eq!(t(&(a.clone() ^ &b)), t(&a) ^ &t(&b) ^ &t(&zero));
    }

    #[test]
    fn random_offsets_rarely_pass(seed: u64) {
        let p = AmdParams::derive(64, 8).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let msg = random_bits(&mut rng, 64);
        let theta = random_bits(&mut rng, p.gamma as usize);
        let word = amd::encode(&msg, &p, &theta).unwrap().to_bits();
        // an offset confined to the tag is always caught
        let mut e = Bits::repeat(false, word.len());
        let k = rng.gen_range(64 + p.gamma as usize..word.len());
        e.set(k, true);
        prop_assert_eq!(amd::decode(&(word ^ &e), &p).unwrap(), Decoded::TamperDetected);
    }
}

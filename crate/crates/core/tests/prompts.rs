//! Prompt bytes pinned by SHA-256 digests computed outside the crate.

use drift_core::corpus::{primes, sha256_hex, PrimeId};
use drift_core::inference::prompt_text;

const PRIME_DIGESTS: [(&str, &str); 7] = [
    (
        "Neutral",
        "1d9faeea127837b23a3be25b3c45d6249c1074f89060a51cbe355fcb4778088e",
    ),
    (
        "Chef",
        "4ea179bdbdc448d52e1294f716254599efd5a9859a3366a01794a569e20a4edd",
    ),
    (
        "Security",
        "8dbeeaf5f47e2c9800c7440aa2bd666207a713e3b1a09771d35e9a5bb090842a",
    ),
    (
        "Child",
        "0163bc116093faeec296a87fb0a081ddf19ea69161e4806c192332a7b2840b6b",
    ),
    (
        "Mobility",
        "3f527dc5f5d78cb568b0a84193fb5d255767c924c7e566de56545aca96205fc1",
    ),
    (
        "Urgent",
        "0811fd6417c1c8ceb640f22a9f3a9908a9c9f97e96e8190e7f29d1f5275241ca",
    ),
    (
        "Leisure",
        "18e25364ff3c08f584267be97e79378f9e900c54cacd598573980a5377233b59",
    ),
];

const MESSAGE_DIGESTS: [&str; 7] = [
    "45a07ec54c3c586b0b53e7cbcde822b5686158bc666335f374775fddb338d9cd",
    "bb31508315838c22eb49db2fede3ab00e7ac775738715d151cf93edb663e7efc",
    "f1ea8e4bc4b562d52a9e78d70351dc56d2d97dbcb641086f60a8bc90d5607d55",
    "ac8ddc783992012e811fdff3e3ab782a5c37633acf56c8287c34f490327ee1b5",
    "4c6c5e38bf97c3ea344b0bd49991e631e7b6d1acf2587d3fff682f3b994c6031",
    "2ae54d386998ab79134cd66ac7a41b3b002a51601fa128e4ac22d54aa0f5d0b0",
    "1fc652eda0912c54189fdf007dd048e66f52381a9bf42b46a3bfcfa7aae0d96a",
];

#[test]
fn prime_texts_match_golden_digests() {
    assert_eq!(primes().len(), 7);
    for (prime, (label, digest)) in primes().iter().zip(PRIME_DIGESTS) {
        assert_eq!(prime.label, label);
        assert_eq!(sha256_hex(prime.prompt_text.as_bytes()), digest, "{label}");
    }
}

#[test]
fn message_texts_match_golden_digests() {
    for (i, digest) in MESSAGE_DIGESTS.iter().enumerate() {
        let p = PrimeId::from_index(i).unwrap().prime();
        assert_eq!(sha256_hex(prompt_text(p).as_bytes()), *digest, "{}", p.label);
    }
}

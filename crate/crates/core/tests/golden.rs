//! Frozen digests, encodings and signatures. Regenerate `golden.txt` with
//! `GOLDEN_REGEN=1 cargo test --test golden` only for a deliberate format change.

use std::collections::BTreeMap;
use std::path::PathBuf;

use tee_ledger::codec::Encode;
use tee_ledger::contracts::counter::CounterOp;
use tee_ledger::contracts::token::TokenOp;
use tee_ledger::contracts::{wrapper_program_hash, ContractCode, Reply};
use tee_ledger::crypto::{hash_bytes, hash_canonical, Digest, PkKeypair, SigKeypair};

fn seed(b: u8) -> [u8; 32] {
    [b; 32]
}

fn vectors() -> BTreeMap<&'static str, String> {
    let token = ContractCode::token("golden");
    let counter = ContractCode::counter("golden", 3);
    let transfer = TokenOp::Transfer {
        to: Digest(seed(0xaa)),
        amount: 42,
    };
    let sk = SigKeypair::from_seed(seed(7));
    let mut v = BTreeMap::new();
    v.insert("hash.empty", hash_bytes(b"").to_hex());
    v.insert("hash.abc", hash_bytes(b"abc").to_hex());
    v.insert("encode.token_code", hex::encode(token.to_canonical()));
    v.insert("encode.transfer", hex::encode(transfer.to_canonical()));
    v.insert(
        "encode.reply_ok_5",
        hex::encode(Reply::ok(5).to_canonical()),
    );
    v.insert("cid.token", token.cid().to_hex());
    v.insert("cid.counter", counter.cid().to_hex());
    v.insert("prog.token", wrapper_program_hash(&token).to_hex());
    v.insert("hash.transfer", hash_canonical(&transfer).to_hex());
    v.insert(
        "hash.counter_op",
        hash_canonical(&CounterOp {
            query: b"q".to_vec(),
        })
        .to_hex(),
    );
    v.insert("sig.seed7.vk", hex::encode(sk.verify_key().0));
    v.insert("sig.seed7.golden", hex::encode(sk.sign(b"golden").0));
    v.insert(
        "pke.seed9.pk",
        hex::encode(PkKeypair::from_seed(seed(9)).public().0),
    );
    v
}

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden.txt")
}

#[test]
fn golden_vectors_are_stable() {
    let now = vectors();
    if std::env::var_os("GOLDEN_REGEN").is_some() {
        let body: String = now.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(path(), body).unwrap();
    }
    let text = std::fs::read_to_string(path()).unwrap();
    let frozen: BTreeMap<&str, &str> = text
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_once('=').expect("name=hex"))
        .collect();
    assert_eq!(frozen.len(), now.len(), "vector set changed");
    for (k, v) in &now {
        assert_eq!(frozen.get(k).copied(), Some(v.as_str()), "{k}");
    }
}

#[test]
fn hashes_match_the_published_sha256_vectors() {
    // FIPS 180-2 examples.
    assert_eq!(
        hash_bytes(b"").to_hex(),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
    assert_eq!(
        hash_bytes(b"abc").to_hex(),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn signatures_match_rfc8032_test_1() {
    let sk = SigKeypair::from_seed(
        hex::decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
            .unwrap()
            .try_into()
            .unwrap(),
    );
    assert_eq!(
        hex::encode(sk.verify_key().0),
        "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
    );
    assert_eq!(
        hex::encode(sk.sign(b"").0),
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
    );
}

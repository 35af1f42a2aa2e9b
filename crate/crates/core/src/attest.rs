//! Attestation and enclave-credential records signed by the platform root.

use crate::canonical_record;
use crate::codec::{Encode, Nested};
use crate::crypto::sig::verify;
use crate::crypto::{Digest, Signature, VerifyKey};

/// What the platform signs on every resume: the program identity and the
/// attested half of the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestedBody {
    pub prog_hash: Digest,
    pub outp1: Vec<u8>,
}

canonical_record!(AttestedBody, 0x51, { prog_hash, outp1 });

pub fn attestation_message(prog_hash: &Digest, outp1: &[u8]) -> Vec<u8> {
    AttestedBody {
        prog_hash: *prog_hash,
        outp1: outp1.to_vec(),
    }
    .to_canonical()
}

pub fn verify_attestation(
    root: &VerifyKey,
    prog_hash: &Digest,
    outp1: &[u8],
    sig: &Signature,
) -> bool {
    verify(root, sig, &attestation_message(prog_hash, outp1))
}

/// Identifies a running enclave to the key-manager committee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclaveCredential {
    pub host: u64,
    pub eid: u64,
    pub prog_hash: Digest,
}

canonical_record!(EnclaveCredential, 0x52, { host, eid, prog_hash });
impl Nested for EnclaveCredential {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedCredential {
    pub credential: EnclaveCredential,
    pub sig: Signature,
}

canonical_record!(SignedCredential, 0x53, { credential, sig });
impl Nested for SignedCredential {}

impl SignedCredential {
    pub fn verify(&self, root: &VerifyKey) -> bool {
        verify(root, &self.sig, &self.credential.to_canonical())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigKeypair;

    #[test]
    fn attestation_binds_program_and_output() {
        let root = SigKeypair::from_seed([4; 32]);
        let ph = Digest([1; 32]);
        let sig = root.sign(&attestation_message(&ph, b"out"));
        assert!(verify_attestation(&root.verify_key(), &ph, b"out", &sig));
        assert!(!verify_attestation(
            &root.verify_key(),
            &Digest([2; 32]),
            b"out",
            &sig
        ));
        assert!(!verify_attestation(&root.verify_key(), &ph, b"out!", &sig));
        // A credential signature is never a valid attestation and vice versa.
        let cred = EnclaveCredential {
            host: 1,
            eid: 2,
            prog_hash: ph,
        };
        let cs = root.sign(&cred.to_canonical());
        assert!(SignedCredential {
            credential: cred.clone(),
            sig: cs
        }
        .verify(&root.verify_key()));
        assert!(!SignedCredential {
            credential: cred,
            sig
        }
        .verify(&root.verify_key()));
    }
}

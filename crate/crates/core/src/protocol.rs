//! Messages exchanged between clients, compute nodes and enclaves.
//!
//! Every message is a canonical record so transcripts are bit-exact.

use crate::attest::verify_attestation;
use crate::canonical_record;
use crate::codec::{Encode, Nested};
use crate::crypto::{hash_bytes, sig, Digest, EncPublicKey, Signature, VerifyKey};
use crate::ledger::StateTransition;

/// Plaintext request body. `seq` makes equal operations encrypt to distinct inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientInput {
    pub seq: u64,
    pub epk: EncPublicKey,
    pub op: Vec<u8>,
}

canonical_record!(ClientInput, 0x60, { seq, epk, op });
impl Nested for ClientInput {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SignedPart {
    cid: Digest,
    input: ClientInput,
}

canonical_record!(SignedPart, 0x61, { cid, input });

/// `(inp, σ_P)`: what a client encrypts under the contract's input key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedInput {
    pub cid: Digest,
    pub input: ClientInput,
    pub spk: VerifyKey,
    pub sig: Signature,
}

canonical_record!(SignedInput, 0x62, { cid, input, spk, sig });

impl SignedInput {
    pub fn signing_bytes(cid: &Digest, input: &ClientInput) -> Vec<u8> {
        SignedPart {
            cid: *cid,
            input: input.clone(),
        }
        .to_canonical()
    }

    pub fn verify(&self) -> bool {
        sig::verify(
            &self.spk,
            &self.sig,
            &Self::signing_bytes(&self.cid, &self.input),
        )
    }
}

/// An encrypted request. `epoch` names the input key it was encrypted under;
/// `epk` is where the node routes the released output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMsg {
    pub cid: Digest,
    pub epoch: u64,
    pub epk: EncPublicKey,
    pub inp_ct: Vec<u8>,
}

canonical_record!(RequestMsg, 0x63, { cid, epoch, epk, inp_ct });
impl Nested for RequestMsg {}

impl RequestMsg {
    pub fn h_inp(&self) -> Digest {
        hash_bytes(&self.inp_ct)
    }
}

/// Plaintext inside `outp_ct`. Binding `epk` here means only the requesting
/// client can receive the released output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedOutput {
    pub epk: EncPublicKey,
    pub output: Vec<u8>,
}

canonical_record!(SealedOutput, 0x64, { epk, output });

/// Claim sent by a client after it has checked the attested transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimMsg {
    pub transition: StateTransition,
    pub outp_ct: Vec<u8>,
    pub epk: EncPublicKey,
}

canonical_record!(ClaimMsg, 0x65, { transition, outp_ct, epk });

/// Attested key release: `out_ct` is the output re-encrypted to the client.
/// `anchor` is the ledger item the output depends on: the committed transition,
/// or for a read-only request the state item it was evaluated against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseBody {
    pub cid: Digest,
    pub h_inp: Digest,
    pub anchor: Digest,
    pub read_only: bool,
    pub out_ct: Vec<u8>,
}

canonical_record!(ReleaseBody, 0x66, { cid, h_inp, anchor, read_only, out_ct });
impl Nested for ReleaseBody {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Release {
    pub body: ReleaseBody,
    pub sig: Signature,
}

canonical_record!(Release, 0x67, { body, sig });
impl Nested for Release {}

impl Release {
    pub fn verify(&self, root: &VerifyKey, prog_hash: &Digest) -> bool {
        verify_attestation(root, prog_hash, &self.body.to_canonical(), &self.sig)
    }
}

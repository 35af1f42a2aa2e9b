//! End users: input encryption and signing, the request/claim loop, and
//! verification of everything a node hands back.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::attest::verify_attestation;
use crate::codec::Encode;
use crate::contracts::{account_of, wrapper_program_hash, AccountId, ContractCode};
use crate::crypto::{hash_bytes, Digest, EncPublicKey, PkKeypair, SigKeypair, VerifyKey};
use crate::ledger::{Ledger, LedgerItem, StateTransition};
use crate::node::{ComputeNode, NodeError};
use crate::protocol::{ClaimMsg, ClientInput, Release, RequestMsg, SignedInput};

pub const MAX_ATTEMPTS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("contract {0} not found on the ledger")]
    NotFound(Digest),
    #[error("node reported success but the ledger has no genesis for {0}")]
    MissingGenesis(Digest),
    #[error("node: {0}")]
    Node(#[from] NodeError),
    #[error("attestation does not verify")]
    BadAttestation,
    #[error("reply does not bind this client's input")]
    InputMismatch,
    #[error("released output is not anchored on the ledger")]
    Unanchored,
    #[error("output does not decrypt")]
    Undecryptable,
    #[error("request skipped by the enclave: {0}")]
    Skipped(String),
    #[error("input was committed but its output ciphertext is unknown to this client")]
    OutputUnrecoverable,
    #[error("gave up after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
}

/// `(ssk, spk)` for signing inputs and `(esk, epk)` for receiving outputs.
#[derive(Debug, Clone)]
pub struct ClientIdentity {
    pub sign: SigKeypair,
    pub enc: PkKeypair,
}

impl ClientIdentity {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x636c_6965_6e74);
        ClientIdentity {
            sign: SigKeypair::generate(&mut rng),
            enc: PkKeypair::generate(&mut rng),
        }
    }

    pub fn spk(&self) -> VerifyKey {
        self.sign.verify_key()
    }

    pub fn epk(&self) -> EncPublicKey {
        self.enc.public()
    }

    pub fn account(&self) -> AccountId {
        account_of(&self.spk())
    }
}

/// An output the client accepted, with what it was checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accepted {
    pub cid: Digest,
    pub seq: u64,
    pub h_inp: Digest,
    pub anchor: Digest,
    pub read_only: bool,
    pub output: Vec<u8>,
}

/// Encrypted view of one ledger item: a client learns kinds and lengths only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemView {
    pub kind: &'static str,
    pub state_len: usize,
}

pub struct Client {
    identity: ClientIdentity,
    ledger: Arc<Ledger>,
    root: VerifyKey,
    rng: ChaCha20Rng,
    next_seq: u64,
    programs: BTreeMap<Digest, Digest>,
    accepted: Vec<Accepted>,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("spk", &self.identity.spk())
            .field("next_seq", &self.next_seq)
            .finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(identity: ClientIdentity, ledger: Arc<Ledger>, seed: u64) -> Self {
        Client {
            identity,
            root: ledger.attestation_root(),
            ledger,
            rng: ChaCha20Rng::seed_from_u64(seed),
            next_seq: 0,
            programs: BTreeMap::new(),
            accepted: Vec::new(),
        }
    }

    pub fn identity(&self) -> &ClientIdentity {
        &self.identity
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    /// Every output accepted so far, in acceptance order.
    pub fn accepted(&self) -> &[Accepted] {
        &self.accepted
    }

    /// Asks `node` to create the contract, then checks the ledger for it.
    pub fn create_contract(
        &mut self,
        node: &ComputeNode,
        code: &ContractCode,
    ) -> Result<Digest, ClientError> {
        let cid = node.create(code)?;
        if cid != code.cid() {
            return Err(ClientError::MissingGenesis(code.cid()));
        }
        self.prog_hash(&cid)
            .map_err(|_| ClientError::MissingGenesis(cid))?;
        Ok(cid)
    }

    fn prog_hash(&mut self, cid: &Digest) -> Result<Digest, ClientError> {
        if let Some(h) = self.programs.get(cid) {
            return Ok(*h);
        }
        let g = self
            .ledger
            .genesis(cid)
            .ok_or(ClientError::NotFound(*cid))?;
        let h = wrapper_program_hash(&g.code);
        self.programs.insert(*cid, h);
        Ok(h)
    }

    /// Encrypts and signs `op` under the contract's current input key.
    fn seal_input(&mut self, cid: &Digest, seq: u64, op: &[u8]) -> Result<RequestMsg, ClientError> {
        let head = self
            .ledger
            .chain_summary(cid)
            .ok_or(ClientError::NotFound(*cid))?;
        let input = ClientInput {
            seq,
            epk: self.identity.epk(),
            op: op.to_vec(),
        };
        let si = SignedInput {
            cid: *cid,
            sig: self
                .identity
                .sign
                .sign(&SignedInput::signing_bytes(cid, &input)),
            input,
            spk: self.identity.spk(),
        };
        Ok(RequestMsg {
            cid: *cid,
            epoch: head.pk_in_epoch,
            epk: self.identity.epk(),
            inp_ct: head.pk_in.encrypt(&mut self.rng, &si.to_canonical()),
        })
    }

    /// Checks that `t` is attested by the contract's wrapper and binds one of
    /// `h_inps`, returning that position.
    pub fn check_transition(
        &mut self,
        cid: &Digest,
        h_inps: &[Digest],
        t: &StateTransition,
    ) -> Result<usize, ClientError> {
        let prog = self.prog_hash(cid)?;
        if t.deliver.cid != *cid
            || !verify_attestation(&self.root, &prog, &t.deliver.to_canonical(), &t.sig)
        {
            return Err(ClientError::BadAttestation);
        }
        let shape_ok = t.deliver.h_inp.len() == t.deliver.h_outp.len();
        h_inps
            .iter()
            .find_map(|h| t.deliver.position_of(h))
            .filter(|_| shape_ok)
            .ok_or(ClientError::InputMismatch)
    }

    /// Verifies a release and decrypts the output.
    pub fn open_release(
        &mut self,
        cid: &Digest,
        seq: u64,
        h_inps: &[Digest],
        release: &Release,
    ) -> Result<Vec<u8>, ClientError> {
        let prog = self.prog_hash(cid)?;
        if release.body.cid != *cid || !release.verify(&self.root, &prog) {
            return Err(ClientError::BadAttestation);
        }
        if !h_inps.contains(&release.body.h_inp) {
            return Err(ClientError::InputMismatch);
        }
        if !self.ledger.contains_hash(cid, &release.body.anchor) {
            return Err(ClientError::Unanchored);
        }
        let output = self
            .identity
            .enc
            .decrypt(&release.body.out_ct)
            .map_err(|_| ClientError::Undecryptable)?;
        self.accepted.push(Accepted {
            cid: *cid,
            seq,
            h_inp: release.body.h_inp,
            anchor: release.body.anchor,
            read_only: release.body.read_only,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Starts a request session for `op` with a fresh sequence number.
    pub fn start(&mut self, cid: Digest, op: Vec<u8>) -> Result<Session, ClientError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        let msg = self.seal_input(&cid, seq, &op)?;
        Ok(Session {
            cid,
            seq,
            op,
            msgs: vec![msg],
            phase: Phase::Request,
            sealed: BTreeMap::new(),
            attempts: 0,
            last_error: None,
        })
    }

    /// Runs `op` to completion, moving to the next node after each failure.
    pub fn execute(
        &mut self,
        nodes: &[Arc<ComputeNode>],
        cid: Digest,
        op: Vec<u8>,
    ) -> Result<Vec<u8>, ClientError> {
        let mut s = self.start(cid, op)?;
        let mut i = 0;
        loop {
            match s.step(self, &nodes[i % nodes.len()]) {
                Progress::Pending { failed } => {
                    if failed {
                        i += 1;
                    }
                }
                Progress::Done(out) => return Ok(out),
                Progress::Failed(e) => return Err(e),
            }
        }
    }

    /// The raw ledger entry: item kinds and ciphertext lengths.
    pub fn read_state(&self, cid: &Digest) -> Result<Vec<ItemView>, ClientError> {
        let items = self
            .ledger
            .read_items(cid)
            .ok_or(ClientError::NotFound(*cid))?;
        Ok(items
            .iter()
            .map(|it| ItemView {
                kind: match it {
                    LedgerItem::Genesis { .. } => "genesis",
                    LedgerItem::Transition(t) if t.deliver.payload.is_diff => "diff",
                    LedgerItem::Transition(_) => "state",
                    LedgerItem::Rekey { .. } => "rekey",
                    LedgerItem::KeyManager(_) => "key-manager",
                },
                state_len: it.head_state().map_or(0, |s| s.ct.len()),
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Request,
    Claim {
        transition: Box<StateTransition>,
        outp_ct: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Progress {
    /// More steps needed. `failed` means the last node call failed and the
    /// caller should pick another node.
    Pending {
        failed: bool,
    },
    Done(Vec<u8>),
    Failed(ClientError),
}

/// One logical request, across retries. Every attempt's input digest is kept,
/// so a transition committed behind the client's back is found and claimed
/// instead of being executed twice.
#[derive(Debug, Clone)]
pub struct Session {
    pub cid: Digest,
    pub seq: u64,
    op: Vec<u8>,
    msgs: Vec<RequestMsg>,
    phase: Phase,
    /// Output ciphertexts seen so far, by their digest.
    sealed: BTreeMap<Digest, Vec<u8>>,
    attempts: u32,
    last_error: Option<String>,
}

impl Session {
    pub fn h_inps(&self) -> Vec<Digest> {
        self.msgs.iter().map(RequestMsg::h_inp).collect()
    }

    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    /// The transition and sealed output this session is claiming, once known.
    pub fn claim_material(&self) -> Option<(&StateTransition, &[u8])> {
        match &self.phase {
            Phase::Claim {
                transition,
                outp_ct,
            } => Some((&**transition, outp_ct)),
            Phase::Request => None,
        }
    }

    /// The message for the next request or batch submission.
    pub fn current(&self) -> &RequestMsg {
        self.msgs.last().expect("session has a message")
    }

    fn fail(&mut self, e: String) -> Progress {
        self.attempts += 1;
        self.last_error = Some(e.clone());
        if self.attempts >= MAX_ATTEMPTS {
            return Progress::Failed(ClientError::RetriesExhausted {
                attempts: self.attempts,
                last: e,
            });
        }
        Progress::Pending { failed: true }
    }

    /// Looks for a committed transition binding any of this session's inputs.
    fn committed(
        &self,
        client: &Client,
    ) -> Option<Result<(StateTransition, Vec<u8>), ClientError>> {
        for h in self.h_inps() {
            if let Some((_, t)) = client.ledger.find_input(&self.cid, &h).into_iter().next() {
                let pos = t.deliver.position_of(&h).expect("indexed by h_inp");
                return Some(
                    self.sealed
                        .get(&t.deliver.h_outp[pos])
                        .cloned()
                        .map(|ct| (t, ct))
                        .ok_or(ClientError::OutputUnrecoverable),
                );
            }
        }
        None
    }

    /// Re-seals under the current input key if it changed since the last attempt.
    fn refresh(&mut self, client: &mut Client) -> Result<(), ClientError> {
        let epoch = client
            .ledger
            .chain_summary(&self.cid)
            .ok_or(ClientError::NotFound(self.cid))?
            .pk_in_epoch;
        if self.current().epoch != epoch {
            let msg = client.seal_input(&self.cid, self.seq, &self.op)?;
            self.msgs.push(msg);
        }
        Ok(())
    }

    /// Performs one node call.
    pub fn step(&mut self, client: &mut Client, node: &ComputeNode) -> Progress {
        if let Phase::Request = self.phase {
            match self.committed(client) {
                Some(Ok((transition, outp_ct))) => {
                    self.phase = Phase::Claim {
                        transition: Box::new(transition),
                        outp_ct,
                    }
                }
                Some(Err(e)) => return Progress::Failed(e),
                None => return self.request(client, node),
            }
        }
        let Phase::Claim {
            transition,
            outp_ct,
        } = self.phase.clone()
        else {
            unreachable!("request phase handled above");
        };
        let claim = ClaimMsg {
            transition: *transition,
            outp_ct,
            epk: client.identity.epk(),
        };
        match node.claim(&claim) {
            Ok(release) => match client.open_release(&self.cid, self.seq, &self.h_inps(), &release)
            {
                Ok(out) => Progress::Done(out),
                Err(e) => self.fail(e.to_string()),
            },
            Err(e) if e.is_stale() => {
                self.phase = Phase::Request;
                self.fail(e.to_string())
            }
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn request(&mut self, client: &mut Client, node: &ComputeNode) -> Progress {
        if let Err(e) = self.refresh(client) {
            return Progress::Failed(e);
        }
        let exec = match node.request(self.current()) {
            Ok(x) => x,
            Err(e) => return self.fail(e.to_string()),
        };
        let h_inps = self.h_inps();
        if let Some(r) = exec
            .releases
            .iter()
            .find(|r| h_inps.contains(&r.body.h_inp))
        {
            return match client.open_release(&self.cid, self.seq, &h_inps, r) {
                Ok(out) => Progress::Done(out),
                Err(e) => self.fail(e.to_string()),
            };
        }
        if let Some(s) = exec.skipped.first() {
            return self.fail(ClientError::Skipped(s.reason.clone()).to_string());
        }
        let Some(t) = exec.transition else {
            return self.fail("empty reply".into());
        };
        let pos = match client.check_transition(&self.cid, &h_inps, &t) {
            Ok(p) => p,
            Err(e) => return self.fail(e.to_string()),
        };
        let Some(outp_ct) = exec.outputs.get(pos).cloned() else {
            return self.fail(ClientError::InputMismatch.to_string());
        };
        if hash_bytes(&outp_ct) != t.deliver.h_outp[pos] {
            return self.fail(ClientError::InputMismatch.to_string());
        }
        self.sealed.insert(t.deliver.h_outp[pos], outp_ct.clone());
        self.phase = Phase::Claim {
            transition: Box::new(t),
            outp_ct,
        };
        Progress::Pending { failed: false }
    }

    /// Accepts a release pushed by a node after a batch commit.
    pub fn deliver(&mut self, client: &mut Client, release: &Release) -> Progress {
        match client.open_release(&self.cid, self.seq, &self.h_inps(), release) {
            Ok(out) => Progress::Done(out),
            Err(e) => self.fail(e.to_string()),
        }
    }

    /// Records a batch outcome that did not include this session's input.
    pub fn batch_missed(&mut self, client: &mut Client, reason: String) -> Progress {
        if let Err(e) = self.refresh(client) {
            return Progress::Failed(e);
        }
        self.fail(reason)
    }
}

//! Random Coq files with a known number of steps, checkable by the
//! simulator against the fixture standard library.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Generated {
    pub text: String,
    pub steps: usize,
    pub proofs: usize,
    pub admitted: usize,
}

struct Block {
    steps: usize,
    proofs: usize,
    admitted: usize,
    text: fn(usize) -> String,
}

const BLOCKS: &[Block] = &[
    Block { steps: 1, proofs: 0, admitted: 0, text: |i| format!("Definition d{i} := S (S O).") },
    Block {
        steps: 1,
        proofs: 0,
        admitted: 0,
        text: |i| format!("Fixpoint double{i} (n : nat) : nat :=\n  match n with\n  | O => O\n  | S m => S (S (double{i} m))\n  end."),
    },
    Block {
        steps: 5,
        proofs: 1,
        admitted: 0,
        text: |i| format!("Lemma refl{i} : forall n : nat, n = n.\nProof.\n  intros n. reflexivity.\nQed."),
    },
    Block {
        steps: 6,
        proofs: 1,
        admitted: 0,
        text: |i| format!("Lemma nil_r{i} : forall (A : Type) (l : list A), l ++ nil = l.\nProof.\n  intros A l. rewrite app_nil_r. reflexivity.\nQed."),
    },
    Block {
        steps: 12,
        proofs: 1,
        admitted: 0,
        text: |i| {
            format!(
                "Theorem ind{i} : forall (A : Type) (l : list A), l ++ nil = l.\nProof.\n  intros A l. induction l.\n  - simpl. reflexivity.\n  - simpl. rewrite IHl. reflexivity.\nQed."
            )
        },
    },
    Block {
        steps: 4,
        proofs: 1,
        admitted: 1,
        text: |i| format!("Lemma adm{i} : forall n : nat, n + O = n.\nProof.\n  intros n.\nAdmitted."),
    },
    Block { steps: 3, proofs: 0, admitted: 0, text: |i| format!("Module M{i}.\n  Definition x{i} := O.\nEnd M{i}.") },
    Block {
        steps: 4,
        proofs: 0,
        admitted: 0,
        text: |i| format!("Section S{i}.\n  Variable v{i} : nat.\n  Definition w{i} := v{i}.\nEnd S{i}."),
    },
    Block { steps: 4, proofs: 1, admitted: 0, text: |i| format!("Lemma triv{i} : True.\nProof. exact I. Qed.") },
];

/// A file of exactly `steps` steps (at least 1).
pub fn file(seed: u64, steps: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec!["Require Import List.".to_string()];
    let (mut n, mut proofs, mut admitted) = (1, 0, 0);
    let mut i = 0;
    while n < steps {
        let left = steps - n;
        let fitting: Vec<&Block> = BLOCKS.iter().filter(|b| b.steps <= left).collect();
        let b = fitting.choose(&mut rng).unwrap();
        if rng.gen_bool(0.15) {
            parts.push(format!("(* block {i} *)"));
        }
        parts.push((b.text)(i));
        n += b.steps;
        proofs += b.proofs;
        admitted += b.admitted;
        i += 1;
    }
    Generated { text: parts.join("\n") + "\n", steps, proofs, admitted }
}

/// Step counts for a corpus of `n` files between `lo` and `hi`.
pub fn sizes(seed: u64, n: usize, lo: usize, hi: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    v[0] = lo;
    if n > 1 {
        v[1] = hi;
    }
    v
}

//! Interactive REPL over a trained checkpoint: per line, run the full
//! track → query → decide → generate pipeline and print the reply.

use std::io::{BufRead, Write};

use dialog_core::corpus::tokenize;
use dialog_core::dst::{self, BeliefState};
use dialog_core::graph::Graph;
use dialog_core::kb::{self, EntityDb};
use dialog_core::model::Model;
use dialog_core::policy;
use dialog_core::Result;

pub struct ChatSession<'a> {
    model: &'a Model,
    db: &'a EntityDb,
    belief: BeliefState,
    domain: String,
}

pub struct ChatReply {
    pub response: String,
    pub delexicalized: bool,
    pub state: serde_json::Value,
}

impl<'a> ChatSession<'a> {
    pub fn new(model: &'a Model, db: &'a EntityDb) -> Self {
        let domain = model.ontology.domains[0].clone();
        Self {
            model,
            db,
            belief: BeliefState::initial(&model.ontology),
            domain,
        }
    }

    pub fn reset(&mut self) {
        self.belief = BeliefState::initial(&self.model.ontology);
        self.domain = self.model.ontology.domains[0].clone();
    }

    pub fn belief_dump(&self) -> serde_json::Value {
        self.belief.dump_json(&self.model.ontology)
    }

    /// Active domain: the last domain word the user mentioned, sticky
    /// across turns.
    fn update_domain(&mut self, tokens: &[String]) {
        for t in tokens {
            if self.model.ontology.domains.iter().any(|d| d == t) {
                self.domain = t.clone();
            }
        }
    }

    pub fn step(&mut self, line: &str) -> Result<ChatReply> {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            return Ok(ChatReply {
                response: String::new(),
                delexicalized: false,
                state: self.belief_dump(),
            });
        }
        self.update_domain(&tokens);
        let ids = self.model.vocab.ids(&tokens);
        let m = self.model;
        let mut g = Graph::new();
        let token_table = m.store.bind(&mut g, "embed.token");
        let sv = dst::build_sv_embeddings(&mut g, &m.store, &m.ontology, &m.index, m.config.embed_dim)?;
        let enc = dialog_core::neural::encode_sequence(
            &mut g,
            &m.store,
            token_table,
            m.config.embed_dim,
            &ids,
            None,
        )?;
        let pred = dst::predict_turn(&mut g, &enc, &sv, m.config.attention_normalize).extract(&g);
        self.belief = dst::update_belief(&self.belief, &pred, m.config.belief_keep)?;

        let (matching, q) = kb::query(self.db, &self.belief, &m.ontology, &self.domain)?;
        let belief_node = g.input(self.belief.concat());
        let z = policy::policy(&mut g, m, belief_node, enc.final_state, &q)?;
        let gate0 = policy::init_gate_memory(&pred, &m.index);
        let out = policy::generate(&mut g, m, z, &gate0, m.config.max_decode_len)?;

        let delex: Vec<String> = out
            .delex_tokens
            .iter()
            .filter(|t| *t != dialog_core::corpus::EOS)
            .cloned()
            .collect();
        let lexicalized = kb::select_entity(&matching)
            .and_then(|e| dialog_core::corpus::lexicalize(&delex, &e.fields).ok());
        let (response, delexicalized) = match lexicalized {
            Some(tokens) => (tokens.join(" "), false),
            None => (delex.join(" "), true),
        };
        Ok(ChatReply {
            response,
            delexicalized,
            state: self.belief_dump(),
        })
    }
}

/// REPL over arbitrary streams (stdin/stdout in production, buffers in
/// tests). `:reset` clears state, `:quit` ends the session.
pub fn repl(
    model: &Model,
    db: &EntityDb,
    show_state: bool,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    let mut session = ChatSession::new(model, db);
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        match line {
            ":quit" => break,
            ":reset" => {
                session.reset();
                writeln!(output, "state cleared")?;
            }
            "" => {}
            _ => {
                let reply = session.step(line)?;
                if reply.delexicalized {
                    writeln!(output, "warning: no matching entity, response not lexicalized")?;
                }
                writeln!(output, "system: {}", reply.response)?;
                if show_state {
                    writeln!(output, "state: {}", reply.state)?;
                }
            }
        }
    }
    Ok(())
}

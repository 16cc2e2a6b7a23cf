//! Template generation through a chat-completions endpoint.

use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::template::{extract_template, select_templates, Template};
use crate::model::RelationId;

pub const SYSTEM_PROMPT: &str = "You are an advanced knowledge triple verbalization system. You take as input a knowledge triple (subject, relation, object) and generate a list of 10 linguistically diverse verbalizations of the triple. For example, the input could be : (France, capital, Paris) and one of your verbalizations may be : \"The capital of France is Paris\".

The veracity of the knowledge triple does not affect the quality of your generation.

Examples of correct verbalizations:

- (Matriak, instance of, university) --> \"Matriak is a university.\"
- (Johnathan Smith, date of death, 11-05-2012) --> \"Johnathan Smith died in 11-05-2012.\"
- (Tranquility Base Hotel & Casino, follows, AM) --> \"Tranquility Base Hotel & Casino follows AM.\"
- (Paris, named after, Parisii) --> \"Paris was named after Parisii.\"";

pub const MAIN_PROMPT: &str = "Here is the knowledge triple to verbalize: ([SUB], [REL], [OBJ]). Your sentences should be concise and end with the term [OBJ].

Due to the ambiguity that could arise from the provided labels, here is their meaning:

- (subject) \"[SUB]\" : \"[SUB_DEF]\"
- (relation) \"[REL]\" : \"[REL_DEF]\"
- (object) \"[OBJ]\" : \"[OBJ_DEF]\"

Finally, here is an example where the relation \"[REL]\" is employed : ([EXP_SUB], [REL], [EXP_OBJ]).";

pub const VERBALIZATIONS_PER_TRIPLE: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("could not parse a list out of the response")]
    Parse,
}

/// Labels and definitions substituted into the main prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInputs {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub subject_def: String,
    pub relation_def: String,
    pub object_def: String,
    pub example_subject: String,
    pub example_object: String,
}

pub fn fill_main_prompt(p: &PromptInputs) -> String {
    MAIN_PROMPT
        .replace("[SUB_DEF]", &p.subject_def)
        .replace("[REL_DEF]", &p.relation_def)
        .replace("[OBJ_DEF]", &p.object_def)
        .replace("[EXP_SUB]", &p.example_subject)
        .replace("[EXP_OBJ]", &p.example_object)
        .replace("[SUB]", &p.subject)
        .replace("[REL]", &p.relation)
        .replace("[OBJ]", &p.object)
}

pub trait ChatClient: Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone)]
pub struct HttpChatClient {
    pub endpoint: String,
    pub token: Option<String>,
    pub model: String,
    pub attempts: u32,
    pub backoff: Duration,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, token: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Endpoint(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            token,
            model: model.into(),
            attempts: 3,
            backoff: Duration::from_millis(500),
            client,
        })
    }

    fn once(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "system", content: system }, ChatMessage { role: "user", content: user }],
            temperature: 0.0,
            max_tokens: 800,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| LlmError::Endpoint(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Endpoint(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| LlmError::Endpoint(e.to_string()))?;
        parsed.choices.into_iter().next().map(|c| c.message.content).ok_or(LlmError::Parse)
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let mut delay = self.backoff;
        let mut last = LlmError::Endpoint("no attempt made".into());
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.once(system, user) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("chat request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    let rest = if digits > 0 {
        match line[digits..].chars().next() {
            Some('.' | ')' | ':') => &line[digits + 1..],
            _ => line,
        }
    } else if let Some(r) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        r
    } else {
        line
    };
    rest.trim().trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}').trim()
}

/// Reads a numbered or one-per-line list of sentences.
pub fn parse_verbalizations(response: &str) -> Result<Vec<String>, LlmError> {
    let items: Vec<String> = response
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if items.is_empty() {
        return Err(LlmError::Parse);
    }
    Ok(items)
}

pub fn request_verbalizations(inputs: &PromptInputs, client: &dyn ChatClient) -> Result<Vec<String>, LlmError> {
    let text = client.complete(SYSTEM_PROMPT, &fill_main_prompt(inputs))?;
    let mut items = parse_verbalizations(&text)?;
    items.truncate(VERBALIZATIONS_PER_TRIPLE);
    Ok(items)
}

/// One sampled triple ready to be sent to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRequest {
    pub relation: RelationId,
    pub inputs: PromptInputs,
}

/// Verbalizes every request with at most `in_flight` concurrent calls and
/// turns the answers into per-relation templates. Failed requests are logged
/// and skipped.
pub fn generate_templates(requests: &[TemplateRequest], client: &dyn ChatClient, in_flight: usize) -> Vec<Template> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(in_flight.max(1)).build();
    let run = || -> Vec<(RelationId, Vec<String>)> {
        requests
            .par_iter()
            .map(|req| {
                let extracted = match request_verbalizations(&req.inputs, client) {
                    Ok(sentences) => sentences
                        .iter()
                        .filter_map(|s| extract_template(s, &req.inputs.subject, &req.inputs.object).ok())
                        .collect(),
                    Err(e) => {
                        log::warn!("verbalization of ({}, {}, {}) failed: {e}", req.inputs.subject, req.relation, req.inputs.object);
                        Vec::new()
                    }
                };
                (req.relation.clone(), extracted)
            })
            .collect()
    };
    let results = match pool {
        Ok(p) => p.install(run),
        Err(_) => run(),
    };
    let mut by_relation: BTreeMap<RelationId, Vec<String>> = BTreeMap::new();
    for (r, ts) in results {
        by_relation.entry(r).or_default().extend(ts);
    }
    by_relation.iter().flat_map(|(r, ts)| select_templates(r, ts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Canned(String);

    impl ChatClient for Canned {
        fn complete(&self, _: &str, _: &str) -> Result<String, LlmError> {
            Ok(self.0.clone())
        }
    }

    fn france() -> PromptInputs {
        PromptInputs {
            subject: "France".into(),
            relation: "capital".into(),
            object: "Paris".into(),
            subject_def: "country in Western Europe".into(),
            relation_def: "seat of government".into(),
            object_def: "capital city of France".into(),
            example_subject: "Germany".into(),
            example_object: "Berlin".into(),
        }
    }

    #[test]
    fn prompt_substitution() {
        let p = fill_main_prompt(&france());
        assert!(p.starts_with("Here is the knowledge triple to verbalize: (France, capital, Paris)."));
        assert!(p.contains("end with the term Paris."));
        assert!(p.contains("- (relation) \"capital\" : \"seat of government\""));
        assert!(p.ends_with("employed : (Germany, capital, Berlin)."));
        assert!(!p.contains('['));
    }

    #[test]
    fn parses_numbered_and_plain_lists() {
        let numbered = "1. The capital of France is Paris.\n2) France's capital is Paris.\n\n3: \"Paris\"";
        assert_eq!(
            parse_verbalizations(numbered).unwrap(),
            vec!["The capital of France is Paris.", "France's capital is Paris.", "Paris"]
        );
        assert_eq!(parse_verbalizations("- a\n* b\nc").unwrap(), vec!["a", "b", "c"]);
        assert!(parse_verbalizations("  \n\n").is_err());
    }

    #[test]
    fn short_lists_are_fine() {
        let text: String = (1..=7).map(|i| format!("{i}. France has capital Paris number {i}\n")).collect();
        let got = request_verbalizations(&france(), &Canned(text)).unwrap();
        assert_eq!(got.len(), 7);
        let text: String = (1..=12).map(|i| format!("{i}. s{i}\n")).collect();
        assert_eq!(request_verbalizations(&france(), &Canned(text)).unwrap().len(), 10);
    }

    #[test]
    fn templates_from_canned_answers() {
        let client = Canned("1. The capital of France is Paris.\n2. France's capital is Paris.\n3. Paris is in France.".into());
        let reqs = vec![TemplateRequest { relation: "P36".into(), inputs: france() }; 2];
        let ts = generate_templates(&reqs, &client, 4);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].frequency, 2);
        assert_eq!(ts[1].text, "The capital of SUBJ is OBJ");
        assert_eq!(ts[0].text, "SUBJ's capital is OBJ");
    }
}

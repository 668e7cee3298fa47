//! Static token → (actor, role) table.
//!
//! The token file is a JSON array:
//!
//! ```json
//! [{"token": "t-eng", "actor": "j.doe", "role": "Engineer"}]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use twinqa_core::domain::Role;

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSession {
    pub token: String,
    pub actor: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: BTreeMap<String, ApiSession>,
}

impl TokenTable {
    pub fn new(sessions: impl IntoIterator<Item = ApiSession>) -> Result<Self, ServiceError> {
        let mut by_token = BTreeMap::new();
        for s in sessions {
            if s.token.trim().is_empty() {
                return Err(ServiceError::Tokens("empty token".into()));
            }
            if s.actor.trim().is_empty() {
                return Err(ServiceError::Tokens(format!("token for role {} has no actor", s.role)));
            }
            // the System role belongs to the engine, never to a caller
            if s.role == Role::System {
                return Err(ServiceError::Tokens(format!("actor `{}` cannot hold the System role", s.actor)));
            }
            if by_token.insert(s.token.clone(), s).is_some() {
                return Err(ServiceError::Tokens("duplicate token".into()));
            }
        }
        Ok(Self { by_token })
    }

    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let sessions: Vec<ApiSession> =
            serde_json::from_str(text).map_err(|e| ServiceError::Tokens(e.to_string()))?;
        Self::new(sessions)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Tokens(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolves an `Authorization: Bearer <token>` header value.
    pub fn authenticate(&self, header: Option<&str>) -> Option<&ApiSession> {
        let token = header?.strip_prefix("Bearer ")?.trim();
        self.by_token.get(token)
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}

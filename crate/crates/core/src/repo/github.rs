//! GitHub REST API. Each check is a single request: repository metadata,
//! one commit lookup, one exact tag ref lookup per candidate.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use super::{RepoHost, RepoLookup, RepoRef};
use crate::fixtures::{RequestKey, ANY_VERSION};
use crate::http::{bearer, fetch_logged, FetchError, Fetcher, RequestLog, Response};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GitHubConfig {
    pub api_base: String,
    #[serde(skip)]
    pub token: Option<String>,
}

impl Default for GitHubConfig {
    fn default() -> Self {
        GitHubConfig {
            api_base: "https://api.github.com".to_string(),
            token: None,
        }
    }
}

pub struct GitHub<'a> {
    fetcher: &'a Fetcher,
    config: GitHubConfig,
}

impl<'a> GitHub<'a> {
    pub fn new(fetcher: &'a Fetcher, config: GitHubConfig) -> Self {
        GitHub { fetcher, config }
    }

    fn get(&self, repo: &RepoRef, facet: String, path: &str, log: &mut RequestLog) -> Result<Response, FetchError> {
        let key = RequestKey::new("github", format!("{}/{}", repo.owner, repo.name), ANY_VERSION, facet);
        let url = format!(
            "{}/repos/{}/{}{path}",
            self.config.api_base.trim_end_matches('/'),
            repo.owner,
            repo.name
        );
        let mut headers = bearer(self.config.token.as_deref());
        headers.push(("accept".into(), "application/vnd.github+json".into()));
        headers.push(("x-github-api-version".into(), "2022-11-28".into()));
        fetch_logged(self.fetcher, log, &key, &url, &headers)
    }

    fn exists(&self, repo: &RepoRef, facet: String, path: &str, log: &mut RequestLog) -> Result<bool, FetchError> {
        let resp = self.get(repo, facet, path, log)?;
        match resp.status {
            200 => Ok(true),
            // 422: the API's answer for a SHA it cannot parse or find
            404 | 409 | 422 => Ok(false),
            status => Err(unexpected(repo, status)),
        }
    }
}

fn unexpected(repo: &RepoRef, status: u16) -> FetchError {
    FetchError::Network {
        url: format!("https://github.com/{}/{}", repo.owner, repo.name),
        message: format!("unexpected HTTP {status} from the GitHub API"),
    }
}

impl RepoHost for GitHub<'_> {
    fn parse(&self, url: &Url) -> Option<Option<RepoRef>> {
        let host = url.host_str()?;
        if host != "github.com" && host != "www.github.com" {
            return None;
        }
        let mut segments = url.path_segments()?.filter(|s| !s.is_empty());
        let repo = match (segments.next(), segments.next()) {
            (Some(owner), Some(name)) => Some(RepoRef {
                owner: owner.to_string(),
                name: name.to_string(),
            }),
            _ => None,
        };
        Some(repo)
    }

    fn repository(&self, repo: &RepoRef, log: &mut RequestLog) -> Result<RepoLookup, FetchError> {
        let resp = self.get(repo, "repo".into(), "", log)?;
        match resp.status {
            200 => {
                let meta: Value = serde_json::from_slice(&resp.body).map_err(|e| FetchError::Network {
                    url: format!("https://github.com/{}/{}", repo.owner, repo.name),
                    message: format!("unparseable repository metadata: {e}"),
                })?;
                let fork = meta.get("fork").and_then(Value::as_bool).unwrap_or(false);
                let parent = meta
                    .get("parent")
                    .and_then(|p| p.get("html_url"))
                    .and_then(Value::as_str)
                    .map(str::to_string);
                Ok(RepoLookup::Found { fork, parent })
            }
            404 => Ok(RepoLookup::NotFound { status: 404 }),
            410 | 451 => Ok(RepoLookup::Gone { status: resp.status }),
            403 if body_mentions_block(&resp.body) => Ok(RepoLookup::Gone { status: 403 }),
            status => Err(unexpected(repo, status)),
        }
    }

    fn commit_exists(&self, repo: &RepoRef, sha: &str, log: &mut RequestLog) -> Result<bool, FetchError> {
        self.exists(repo, format!("commit-{sha}"), &format!("/commits/{sha}"), log)
    }

    fn tag_exists(&self, repo: &RepoRef, tag: &str, log: &mut RequestLog) -> Result<bool, FetchError> {
        let path: String = tag
            .split('/')
            .map(|part| url::form_urlencoded::byte_serialize(part.as_bytes()).collect::<String>())
            .collect::<Vec<_>>()
            .join("/");
        self.exists(repo, format!("tag-{tag}"), &format!("/git/ref/tags/{path}"), log)
    }
}

/// GitHub answers 403 with "Repository access blocked" for disabled
/// repositories.
fn body_mentions_block(body: &[u8]) -> bool {
    let text = String::from_utf8_lossy(body).to_ascii_lowercase();
    text.contains("access blocked") || text.contains("disabled")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::FixtureStore;

    #[test]
    fn parses_repository_urls() {
        let fetcher = Fetcher::offline(FixtureStore::new("/nonexistent"));
        let gh = GitHub::new(&fetcher, GitHubConfig::default());
        let parse = |u: &str| gh.parse(&Url::parse(u).unwrap());
        assert_eq!(
            parse("https://github.com/a/b/tree/main/x"),
            Some(Some(RepoRef {
                owner: "a".into(),
                name: "b".into()
            }))
        );
        assert_eq!(parse("https://github.com/a"), Some(None));
        assert_eq!(parse("https://gitlab.com/a/b"), None);
        assert_eq!(parse("https://gist.github.com/a/b"), None);
    }
}

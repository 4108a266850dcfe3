use url::Url;

/// Canonicalizes the many ways registries spell a repository location into
/// an `https://host/path` URL, or `None` if the value cannot denote one.
///
/// Handles `git+` prefixes, Maven `scm:<vcs>:` prefixes, the package-manager
/// shorthands (`owner/repo`, `github:owner/repo`, `gitlab:`, `bitbucket:`,
/// `gist:`), scp-style `git@host:owner/repo`, and `git://`/`ssh://` schemes.
/// Credentials, ports, query and fragment are dropped, as are a trailing
/// `.git` and trailing slashes.
pub fn normalize_source_url(raw: &str) -> Option<String> {
    let mut value = raw.trim();
    if value.is_empty() || value.chars().any(char::is_whitespace) {
        return None;
    }
    while let Some(rest) = value.strip_prefix("scm:") {
        // scm:git:https://..., scm:svn:..., scm:git:git@host:path
        value = rest.split_once(':').map(|(_, r)| r)?;
    }
    value = value.strip_prefix("git+").unwrap_or(value);

    for (prefix, host) in [
        ("github:", "github.com"),
        ("gitlab:", "gitlab.com"),
        ("bitbucket:", "bitbucket.org"),
        ("gist:", "gist.github.com"),
    ] {
        if let Some(path) = value.strip_prefix(prefix) {
            return finish(host, path);
        }
    }

    if !value.contains("://") {
        if let Some((user_host, path)) = value.split_once(':') {
            // scp-like: git@github.com:owner/repo.git
            if let Some((_, host)) = user_host.rsplit_once('@') {
                if host.contains('.') && !path.starts_with('/') {
                    return finish(host, path);
                }
            }
            return None;
        }
        if is_shorthand(value) {
            return finish("github.com", value);
        }
        return None;
    }

    let url = Url::parse(value).ok()?;
    if !matches!(url.scheme(), "https" | "http" | "git" | "ssh" | "git+ssh") {
        return None;
    }
    let host = url.host_str()?;
    finish(host, url.path())
}

fn is_shorthand(value: &str) -> bool {
    let mut parts = value.split('/');
    let segment_ok = |s: &str| {
        !s.is_empty()
            && !s.starts_with('.')
            && s.chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    };
    matches!(
        (parts.next(), parts.next(), parts.next()),
        (Some(owner), Some(repo), None) if segment_ok(owner) && segment_ok(repo)
    )
}

fn finish(host: &str, path: &str) -> Option<String> {
    let host = host.to_ascii_lowercase();
    let valid_host = host.contains('.')
        && !host.starts_with('.')
        && !host.ends_with('.')
        && host
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '.'));
    if !valid_host {
        return None;
    }
    let path = path.split(['?', '#']).next().unwrap_or("");
    let mut path = path.trim_matches('/');
    if let Some(stripped) = path.strip_suffix(".git") {
        path = stripped.trim_end_matches('/');
    }
    if path.split('/').any(|seg| seg == ".." || seg == ".") {
        return None;
    }
    if host == "github.com" || host == "www.github.com" {
        // deep links into a GitHub repository (tree/, blob/, ...) name the repository
        let repo: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).take(2).collect();
        let repo = repo.join("/");
        let repo = repo.strip_suffix(".git").unwrap_or(&repo);
        return Some(format!("https://github.com/{repo}").trim_end_matches('/').to_string());
    }
    if path.is_empty() {
        Some(format!("https://{host}"))
    } else {
        Some(format!("https://{host}/{path}"))
    }
}

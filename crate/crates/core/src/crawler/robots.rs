//! Cached robots.txt rules for one host.

use std::time::Duration;

use texting_robots::Robot;

use crate::model::CanonicalUri;

#[derive(Debug)]
pub struct RobotsRules {
    robot: Option<Robot>,
}

impl RobotsRules {
    pub fn allow_all() -> Self {
        Self { robot: None }
    }

    /// Rules from a robots.txt body. Unparseable files allow everything.
    /// Groups are matched on the user agent's product token.
    pub fn parse(user_agent: &str, body: &[u8]) -> Self {
        let token = user_agent.split('/').next().unwrap_or(user_agent).trim();
        match Robot::new(token, body) {
            Ok(robot) => Self { robot: Some(robot) },
            Err(e) => {
                tracing::debug!(error = %e, "unparseable robots.txt, allowing all");
                Self::allow_all()
            }
        }
    }

    pub fn allowed(&self, uri: &CanonicalUri) -> bool {
        match &self.robot {
            Some(robot) => robot.allowed(&uri.to_string()),
            None => true,
        }
    }

    pub fn crawl_delay(&self) -> Option<Duration> {
        self.robot
            .as_ref()
            .and_then(|r| r.delay)
            .filter(|d| d.is_finite() && *d > 0.0)
            .map(Duration::from_secs_f32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uri(s: &str) -> CanonicalUri {
        CanonicalUri::parse(s).unwrap()
    }

    #[test]
    fn disallow_and_delay() {
        let rules = RobotsRules::parse(
            "onion-archive/0.1",
            b"User-agent: *\nDisallow: /private/\nCrawl-delay: 2\n",
        );
        assert!(rules.allowed(&uri("http://bfnews3u2ox4m4ty.onion/index.html")));
        assert!(!rules.allowed(&uri("http://bfnews3u2ox4m4ty.onion/private/a")));
        assert_eq!(rules.crawl_delay(), Some(Duration::from_secs(2)));
    }

    #[test]
    fn agent_specific_group_wins() {
        let rules = RobotsRules::parse(
            "onion-archive/0.1",
            b"User-agent: onion-archive\nDisallow: /x\n\nUser-agent: *\nDisallow: /\n",
        );
        assert!(rules.allowed(&uri("http://bfnews3u2ox4m4ty.onion/a")));
        assert!(!rules.allowed(&uri("http://bfnews3u2ox4m4ty.onion/x")));
    }

    #[test]
    fn empty_allows_all() {
        let rules = RobotsRules::parse("a", b"");
        assert!(rules.allowed(&uri("http://bfnews3u2ox4m4ty.onion/anything")));
        assert_eq!(rules.crawl_delay(), None);
        assert!(RobotsRules::allow_all().allowed(&uri("http://example.com/")));
    }
}

//! Synthetic onion sites with deterministic content.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CanonicalUri, OnionAddress, Timestamp14};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Era {
    pub address: OnionAddress,
    pub active_from: Timestamp14,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPage {
    pub path: String,
    /// Navigation references exactly as written in the page.
    #[serde(default)]
    pub links: Vec<String>,
    /// Paths of images, stylesheets and scripts the page embeds.
    #[serde(default)]
    pub requisites: Vec<String>,
    /// Adds an inline script to the page.
    #[serde(default)]
    pub script: bool,
    /// Answer with a 302 to this reference instead of a page.
    #[serde(default)]
    pub redirect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSite {
    pub name: String,
    pub eras: Vec<Era>,
    pub pages: Vec<SimPage>,
    /// robots.txt body; absent means 404.
    #[serde(default)]
    pub robots: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Served {
    pub status: u16,
    pub content_type: &'static str,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl SimSite {
    pub fn validate(&self) -> Result<(), String> {
        if self.eras.is_empty() {
            return Err(format!("site `{}` has no eras", self.name));
        }
        let distinct: BTreeSet<&OnionAddress> = self.eras.iter().map(|e| &e.address).collect();
        if distinct.len() != self.eras.len() {
            return Err(format!("site `{}` reuses an era address", self.name));
        }
        if self
            .eras
            .windows(2)
            .any(|w| w[0].active_from >= w[1].active_from)
        {
            return Err(format!("site `{}` eras are not in time order", self.name));
        }
        if self.page("/").is_none() {
            return Err(format!("site `{}` has no root page", self.name));
        }
        let reachable = self.reachable(u32::MAX);
        if let Some(p) = self.pages.iter().find(|p| !reachable.contains_key(&p.path)) {
            return Err(format!(
                "site `{}` page {} is unreachable from /",
                self.name, p.path
            ));
        }
        Ok(())
    }

    pub fn page(&self, path: &str) -> Option<&SimPage> {
        self.pages.iter().find(|p| p.path == path)
    }

    /// Index of the era active at `at`; `None` before the first era.
    pub fn era_at(&self, at: &Timestamp14) -> Option<usize> {
        self.eras.iter().rposition(|e| e.active_from <= *at)
    }

    pub fn era_index_of(&self, address: &OnionAddress) -> Option<usize> {
        self.eras.iter().position(|e| &e.address == address)
    }

    pub fn root_uri(&self, era: usize) -> CanonicalUri {
        CanonicalUri::parse(&format!("http://{}/", self.eras[era].address))
            .expect("valid onion root")
    }

    fn resources(&self) -> BTreeSet<&str> {
        self.pages
            .iter()
            .flat_map(|p| p.requisites.iter().map(String::as_str))
            .collect()
    }

    /// The response for `path` when requested under `host`.
    pub fn serve(&self, host: &str, path: &str) -> Served {
        if path == "/robots.txt" {
            return match &self.robots {
                Some(body) => Served {
                    status: 200,
                    content_type: "text/plain",
                    headers: Vec::new(),
                    body: body.as_bytes().to_vec(),
                },
                None => not_found(),
            };
        }
        if let Some(page) = self.page(path) {
            if let Some(target) = &page.redirect {
                return Served {
                    status: 302,
                    content_type: "text/html",
                    headers: vec![("Location".into(), target.clone())],
                    body: format!("<a href=\"{target}\">moved</a>").into_bytes(),
                };
            }
            return Served {
                status: 200,
                content_type: "text/html; charset=utf-8",
                headers: Vec::new(),
                body: self.render_page(host, page).into_bytes(),
            };
        }
        if self.resources().contains(path) {
            return render_resource(&self.name, path);
        }
        not_found()
    }

    fn render_page(&self, host: &str, page: &SimPage) -> String {
        let mut head = String::new();
        let mut body = String::new();
        for r in &page.requisites {
            match extension(r) {
                "css" => head.push_str(&format!("<link rel=\"stylesheet\" href=\"{r}\">")),
                "js" => head.push_str(&format!("<script src=\"{r}\"></script>")),
                _ => body.push_str(&format!("<img src=\"{r}\" alt=\"\">")),
            }
        }
        if page.script {
            head.push_str("<script>document.title += \" (live)\";</script>");
        }
        for (i, l) in page.links.iter().enumerate() {
            body.push_str(&format!("<li><a href=\"{l}\">link {i}</a></li>"));
        }
        format!(
            "<!DOCTYPE html>\n<html><head><title>{} {}</title>{head}</head>\n<body><h1>{}</h1><p>served as {host}{}</p><ul>{body}</ul></body></html>\n",
            self.name, page.path, self.name, page.path
        )
    }

    /// Page paths reachable from `/` within `max_depth` navigation hops,
    /// with their depth. Only same-site relative or root-relative links count.
    pub fn reachable(&self, max_depth: u32) -> BTreeMap<String, u32> {
        let mut seen = BTreeMap::new();
        let mut queue = VecDeque::from([("/".to_string(), 0u32)]);
        while let Some((path, depth)) = queue.pop_front() {
            if seen.contains_key(&path) || self.page(&path).is_none() {
                continue;
            }
            seen.insert(path.clone(), depth);
            if depth == max_depth {
                continue;
            }
            let page = self.page(&path).expect("checked above");
            let targets = page.links.iter().chain(page.redirect.iter());
            for link in targets {
                if let Some(p) = same_site_path(&path, link) {
                    queue.push_back((p, depth + 1));
                }
            }
        }
        seen
    }

    /// A connected site of `n_pages` pages with shared and per-page requisites.
    pub fn generated(name: &str, eras: Vec<Era>, n_pages: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths: Vec<String> = (0..n_pages)
            .map(|i| {
                if i == 0 {
                    "/".to_string()
                } else {
                    format!("/p/{i}.html")
                }
            })
            .collect();
        let mut pages: Vec<SimPage> = paths
            .iter()
            .map(|p| SimPage {
                path: p.clone(),
                ..SimPage::default()
            })
            .collect();
        // A random tree keeps every page reachable; extra edges add cycles.
        for (i, path) in paths.iter().enumerate().skip(1) {
            let parent = rng.gen_range(0..i);
            pages[parent].links.push(path.clone());
        }
        for page in pages.iter_mut() {
            for _ in 0..rng.gen_range(0..3) {
                let target = paths.choose(&mut rng).expect("non-empty").clone();
                if !page.links.contains(&target) {
                    page.links.push(target);
                }
            }
            page.requisites.push("/static/site.css".into());
            if rng.gen_bool(0.3) {
                page.requisites
                    .push(format!("/img{}.png", page.path.replace('/', "_")));
            }
            page.script = rng.gen_bool(0.1);
        }
        pages[0].requisites.push("/static/app.js".into());
        Self {
            name: name.to_string(),
            eras,
            pages,
            robots: None,
        }
    }
}

fn not_found() -> Served {
    Served {
        status: 404,
        content_type: "text/plain",
        headers: Vec::new(),
        body: b"not found\n".to_vec(),
    }
}

fn extension(path: &str) -> &str {
    path.rsplit_once('.').map_or("", |(_, e)| e)
}

fn render_resource(site: &str, path: &str) -> Served {
    let (content_type, body) = match extension(path) {
        "css" => (
            "text/css",
            format!("/* {site} */ body {{ font-family: serif; }}\n").into_bytes(),
        ),
        "js" => (
            "application/javascript",
            format!("console.log({:?});\n", site).into_bytes(),
        ),
        _ => {
            // Not valid UTF-8, so byte-identity checks cover binary payloads.
            let mut b = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0xff, 0xfe];
            b.extend_from_slice(format!("{site}{path}").as_bytes());
            ("image/png", b)
        }
    };
    Served {
        status: 200,
        content_type,
        headers: Vec::new(),
        body,
    }
}

/// Resolves a page reference to a same-site path, if it is one.
pub fn same_site_path(from: &str, link: &str) -> Option<String> {
    if link.contains("://") || link.starts_with("//") {
        return None;
    }
    let base = url::Url::parse(&format!("http://site.invalid{from}")).ok()?;
    let joined = base.join(link).ok()?;
    Some(joined.path().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn era(addr: &str, at: &str) -> Era {
        Era {
            address: addr.parse().unwrap(),
            active_from: Timestamp14::parse(at).unwrap(),
        }
    }

    fn five_pages() -> SimSite {
        let page = |path: &str, links: &[&str]| SimPage {
            path: path.into(),
            links: links.iter().map(|s| s.to_string()).collect(),
            ..SimPage::default()
        };
        SimSite {
            name: "five".into(),
            eras: vec![era("bfnews3u2ox4m4ty.onion", "20200101000000")],
            pages: vec![
                page("/", &["a.html", "/b.html"]),
                page("/a.html", &["/c.html", "/"]),
                page("/b.html", &["c.html"]),
                page("/c.html", &["/d.html"]),
                page("/d.html", &["/a.html"]),
            ],
            robots: None,
        }
    }

    #[test]
    fn hand_enumerated_reachability() {
        let s = five_pages();
        s.validate().unwrap();
        let by_depth: Vec<(String, u32)> = s.reachable(2).into_iter().collect();
        assert_eq!(
            by_depth,
            vec![
                ("/".into(), 0),
                ("/a.html".into(), 1),
                ("/b.html".into(), 1),
                ("/c.html".into(), 2),
            ]
        );
        assert_eq!(s.reachable(3).len(), 5);
    }

    #[test]
    fn era_lookup() {
        let mut s = five_pages();
        s.eras.push(era("nytimes3xbfgragh.onion", "20200601000000"));
        assert_eq!(
            s.era_at(&Timestamp14::parse("20191231000000").unwrap()),
            None
        );
        assert_eq!(
            s.era_at(&Timestamp14::parse("20200301000000").unwrap()),
            Some(0)
        );
        assert_eq!(
            s.era_at(&Timestamp14::parse("20200601000000").unwrap()),
            Some(1)
        );
    }

    #[test]
    fn generated_sites_are_connected_and_deterministic() {
        let eras = vec![era("bfnews3u2ox4m4ty.onion", "20200101000000")];
        let a = SimSite::generated("g", eras.clone(), 50, 7);
        let b = SimSite::generated("g", eras, 50, 7);
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.serve("h", "/").status, 200);
        assert_eq!(a.serve("h", "/static/site.css").status, 200);
        assert_eq!(a.serve("h", "/nope").status, 404);
    }
}

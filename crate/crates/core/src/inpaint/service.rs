//! HTTP client for an external inpainting service.
//!
//! Wire contract: `POST {endpoint}/v1/inpaint` with a JSON body
//! `{image_png_b64, mask_png_b64, control_png_b64, prompt, seed, steps?}`,
//! answered by `{image_png_b64}` or `{error}`; `GET {endpoint}/v1/health`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::InpaintRequest;
use crate::error::{Error, Result};
use crate::image::{decode_png_rgb, encode_png, Image, Mask, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub timeout_s: f64,
    /// Extra attempts after the first on timeouts, connection failures and
    /// 5xx/429 responses.
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    pub max_concurrent: usize,
    /// Requests are sent at `1/downscale_factor` resolution and the
    /// response is upsampled back.
    pub downscale_factor: usize,
    pub steps: Option<u32>,
    pub prompt: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000".into(),
            timeout_s: 30.0,
            retries: 2,
            backoff_ms: 250,
            max_concurrent: 4,
            downscale_factor: 4,
            steps: None,
            prompt: "an empty room".into(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    image_png_b64: String,
    mask_png_b64: String,
    control_png_b64: String,
    prompt: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    image_png_b64: Option<String>,
    error: Option<String>,
}

/// Counting semaphore capping in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Failure {
    Retry(Error),
    Fatal(Error),
}

pub struct ServiceClient {
    config: ServiceConfig,
    agent: ureq::Agent,
    slots: Slots,
}

impl ServiceClient {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        if !(config.timeout_s > 0.0) || config.max_concurrent == 0 || config.downscale_factor == 0 {
            return Err(Error::Config(
                "service timeout, concurrency and downscale factor must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Slots {
            free: Mutex::new(config.max_concurrent),
            cv: Condvar::new(),
        };
        Ok(Self { config, agent, slots })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    pub fn health(&self) -> Result<()> {
        let url = self.url("/v1/health");
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| Error::BackendUnavailable(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        if status == 200 {
            Ok(())
        } else {
            Err(Error::BackendError {
                status,
                message: "health check failed".into(),
            })
        }
    }

    pub fn inpaint(&self, req: &InpaintRequest) -> Result<RgbImage> {
        req.validate()?;
        let f = self.config.downscale_factor;
        let (w, h) = (req.image.width, req.image.height);
        if w % f != 0 || h % f != 0 {
            return Err(Error::MismatchedInput(format!(
                "{w}x{h} panorama is not divisible by downscale factor {f}"
            )));
        }
        let image = downscale_rgb(&req.image, f);
        let mask = downscale_mask(&req.mask, f);
        let control = downscale_mask(&req.control.edges, f);
        let body = WireRequest {
            image_png_b64: B64.encode(encode_png(&image)?),
            mask_png_b64: B64.encode(encode_png(&mask.to_u8())?),
            control_png_b64: B64.encode(encode_png(&control.to_u8())?),
            prompt: req.prompt.as_deref().unwrap_or(&self.config.prompt),
            seed: req.seed,
            steps: self.config.steps,
        };

        let _slot = self.slots.acquire();
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("inpaint service retry {attempt} in {delay} ms");
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.post_once(&body, image.width, image.height) {
                Ok(out) => return Ok(upsample_rgb(&out, f)),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn post_once(&self, body: &WireRequest, w: usize, h: usize) -> std::result::Result<RgbImage, Failure> {
        let url = self.url("/v1/inpaint");
        let mut resp = self.agent.post(&url).send_json(body).map_err(|e| transport(&url, e))?;
        let status = resp.status().as_u16();
        let parsed: std::result::Result<WireResponse, _> =
            resp.body_mut().with_config().limit(u64::MAX).read_json();
        let message = |p: &std::result::Result<WireResponse, ureq::Error>| match p {
            Ok(WireResponse { error: Some(m), .. }) => m.clone(),
            Ok(_) => String::new(),
            Err(e) => e.to_string(),
        };
        if status >= 500 || status == 429 {
            return Err(Failure::Retry(Error::BackendError {
                status,
                message: message(&parsed),
            }));
        }
        if status != 200 {
            return Err(Failure::Fatal(Error::BackendError {
                status,
                message: message(&parsed),
            }));
        }
        let parsed = parsed.map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) => transport(&url, e),
            other => Failure::Fatal(Error::BackendError {
                status,
                message: format!("malformed response: {other}"),
            }),
        })?;
        let fatal = |message: String| Failure::Fatal(Error::BackendError { status, message });
        let b64 = match parsed {
            WireResponse { error: Some(m), .. } => return Err(fatal(m)),
            WireResponse { image_png_b64: Some(b), .. } => b,
            _ => return Err(fatal("response has neither image_png_b64 nor error".into())),
        };
        let bytes = B64.decode(b64.as_bytes()).map_err(|e| fatal(format!("bad base64: {e}")))?;
        let img = decode_png_rgb(&bytes).map_err(|e| fatal(e.to_string()))?;
        if img.width != w || img.height != h {
            return Err(fatal(format!(
                "response is {}x{}, expected {w}x{h}",
                img.width, img.height
            )));
        }
        Ok(img)
    }
}

fn transport(url: &str, e: ureq::Error) -> Failure {
    Failure::Retry(Error::BackendUnavailable(format!("{url}: {e}")))
}

/// Box-average downsampling by an integer factor.
pub fn downscale_rgb(img: &RgbImage, f: usize) -> RgbImage {
    if f == 1 {
        return img.clone();
    }
    let (w, h, c) = (img.width / f, img.height / f, img.channels);
    let mut out = Image::new(w, h, c, 0u8);
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                let mut s = 0u32;
                for dy in 0..f {
                    for dx in 0..f {
                        s += img.get(x * f + dx, y * f + dy, k) as u32;
                    }
                }
                let n = (f * f) as u32;
                out.set(x, y, k, ((s + n / 2) / n) as u8);
            }
        }
    }
    out
}

/// A block is set when any of its pixels is.
pub fn downscale_mask(mask: &Mask, f: usize) -> Mask {
    if f == 1 {
        return mask.clone();
    }
    let (w, h) = (mask.width / f, mask.height / f);
    let mut out = Image::new(w, h, 1, false);
    for y in 0..h {
        for x in 0..w {
            let any = (0..f).any(|dy| (0..f).any(|dx| mask.get(x * f + dx, y * f + dy, 0)));
            out.set(x, y, 0, any);
        }
    }
    out
}

/// Bilinear upsampling by an integer factor with wrapped columns.
pub fn upsample_rgb(img: &RgbImage, f: usize) -> RgbImage {
    if f == 1 {
        return img.clone();
    }
    let (sw, sh, c) = (img.width, img.height, img.channels);
    let (w, h) = (sw * f, sh * f);
    let mut out = Image::new(w, h, c, 0u8);
    for y in 0..h {
        let sy = ((y as f64 + 0.5) / f as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = sy - y0 as f64;
        for x in 0..w {
            let sx = (x as f64 + 0.5) / f as f64 - 0.5;
            let x0f = sx.floor();
            let tx = sx - x0f;
            let x0 = (x0f as isize).rem_euclid(sw as isize) as usize;
            let x1 = (x0 + 1) % sw;
            for k in 0..c {
                let v = (1.0 - ty) * ((1.0 - tx) * img.get(x0, y0, k) as f64 + tx * img.get(x1, y0, k) as f64)
                    + ty * ((1.0 - tx) * img.get(x0, y1, k) as f64 + tx * img.get(x1, y1, k) as f64);
                out.set(x, y, k, v.round() as u8);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_round_trip_through_scaling() {
        let img = Image::new(16, 8, 3, 91u8);
        assert_eq!(upsample_rgb(&downscale_rgb(&img, 4), 4), img);
    }

    #[test]
    fn mask_downscale_is_conservative() {
        let mut m = Image::new(8, 4, 1, false);
        m.set(5, 3, 0, true);
        let d = downscale_mask(&m, 4);
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.data, vec![false, true]);
    }

    #[test]
    fn bad_config_rejected() {
        let c = ServiceConfig {
            max_concurrent: 0,
            ..Default::default()
        };
        assert!(ServiceClient::new(c).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // Bind then drop a listener to get a port nobody is serving.
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let client = ServiceClient::new(ServiceConfig {
            endpoint: format!("http://127.0.0.1:{port}"),
            retries: 1,
            backoff_ms: 1,
            downscale_factor: 1,
            ..Default::default()
        })
        .unwrap();
        let req = InpaintRequest::new(Image::new(16, 8, 3, 0u8), Image::new(16, 8, 1, true), None);
        assert!(matches!(client.inpaint(&req), Err(Error::BackendUnavailable(_))));
        assert!(matches!(client.health(), Err(Error::BackendUnavailable(_))));
    }
}

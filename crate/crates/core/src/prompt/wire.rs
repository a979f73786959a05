//! Chat-completion style HTTP exchange with a multimodal model.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine as _;
use image::RgbImage;
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "GSNAV_API_KEY";

#[derive(Debug, Clone)]
pub struct ChatEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl ChatEndpoint {
    /// Endpoint with the API key read from the environment.
    pub fn from_env(url: &str, model: &str) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::invalid(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self {
            url: url.to_string(),
            model: model.to_string(),
            api_key,
            timeout: Duration::from_secs(60),
            retries: 2,
        })
    }

    /// Sends one user turn with text and an image; returns the reply text.
    pub fn complete(&self, text: &str, image: &RgbImage) -> Result<String> {
        let body = build_chat_body(&self.model, text, &encode_png(image)?);
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let mut last = String::new();
        for _ in 0..=self.retries {
            let resp = client.post(&self.url).bearer_auth(&self.api_key).json(&body).send();
            match resp {
                Ok(r) if r.status().is_success() => {
                    let v: Value = r.json().map_err(|e| Error::parse("chat reply", e.to_string()))?;
                    return extract_reply(&v).ok_or_else(|| Error::parse("chat reply", "no message content"));
                }
                Ok(r) => last = format!("HTTP {}", r.status()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Transport(last))
    }
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn build_chat_body(model: &str, text: &str, png: &[u8]) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
    json!({
        "model": model,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": text},
                {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}
            ]
        }]
    })
}

/// `choices[0].message.content`, accepting either a string or a list of text parts.
pub fn extract_reply(v: &Value) -> Option<String> {
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p.get("text")?.as_str()).collect();
            (!text.is_empty()).then(|| text.join("\n"))
        }
        _ => None,
    }
}

/// Id from the last line containing `CHOICE:`.
pub fn parse_choice(reply: &str) -> Option<usize> {
    let line = reply.lines().rev().find(|l| l.contains("CHOICE:"))?;
    let rest = line.split("CHOICE:").nth(1)?;
    let digits: String = rest
        .trim_start_matches(|c: char| c.is_whitespace() || c == '`' || c == '*' || c == '#')
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

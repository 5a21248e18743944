use std::time::Duration;

use super::{load_detection_records, Detection, DetectionError};

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("detector transport failure: {0}")]
    Transport(String),
    #[error("detector returned status {0}")]
    Status(u16),
    #[error("detector response violates schema: {0}")]
    Schema(#[from] DetectionError),
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

/// Asks a detector service for the detections of one image.
///
/// Request body: `{"image_id": ...}`. The response body uses the detection
/// fixture record format, one record per line, and must only contain
/// records for the requested image.
pub fn fetch_detections(image_id: &str, endpoint: &str) -> Result<Vec<Detection>, FetchError> {
    let body = serde_json::json!({ "image_id": image_id }).to_string();
    let mut response = agent()
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| match e {
            ureq::Error::StatusCode(code) => FetchError::Status(code),
            other => FetchError::Transport(other.to_string()),
        })?;
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| FetchError::Transport(e.to_string()))?;
    let records = load_detection_records(text.as_bytes())?;
    let mut out = Vec::with_capacity(records.len());
    for (index, r) in records.into_iter().enumerate() {
        if r.image_id != image_id {
            return Err(FetchError::Schema(DetectionError::Malformed {
                index,
                message: format!("record for image `{}`, expected `{image_id}`", r.image_id),
            }));
        }
        out.push(Detection::new(r.label, r.confidence, r.bbox));
    }
    Ok(out)
}

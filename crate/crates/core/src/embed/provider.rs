use std::io::Write;
use std::process::{Command, Stdio};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::audio::Waveform;
use super::tensor_io::read_tensor;
use super::{EmbedError, EmbeddingTensor, Modality};
use crate::corpus::LanguageCode;

/// `(time steps, feature dim)` of a modality's output.
pub type Dims = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDims {
    pub video: Dims,
    pub audio: Dims,
    pub text: Dims,
}

impl ProviderDims {
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            video: (rows, cols),
            audio: (rows, cols),
            text: (rows, cols),
        }
    }

    pub fn get(&self, modality: Modality) -> Dims {
        match modality {
            Modality::Video => self.video,
            Modality::Audio => self.audio,
            Modality::Text => self.text,
        }
    }
}

/// Frozen feature extractors for the three modalities.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Hash of everything that influences the output (weights, layer choice, dims).
    fn config_hash(&self) -> String;

    fn dims(&self) -> ProviderDims;

    fn embed_video(&self, media: &[u8]) -> Result<Array2<f32>, EmbedError>;

    /// Receives audio already resampled to 16 kHz.
    fn embed_audio(&self, waveform: &Waveform) -> Result<Array2<f32>, EmbedError>;

    fn embed_text(&self, text: &str, language: LanguageCode) -> Result<Array2<f32>, EmbedError>;
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn content_hash_bytes(bytes: &[u8]) -> String {
    sha256_hex(&[bytes])
}

pub fn content_hash_text(text: &str, language: LanguageCode) -> String {
    sha256_hex(&[language.as_str().as_bytes(), text.as_bytes()])
}

/// Calls the provider for one modality and checks the shape and finiteness contract.
pub fn embed_checked(
    provider: &dyn EmbeddingProvider,
    modality: Modality,
    content_hash: String,
    run: impl FnOnce() -> Result<Array2<f32>, EmbedError>,
) -> Result<EmbeddingTensor, EmbedError> {
    let values = run()?;
    let expected = provider.dims().get(modality);
    if values.dim() != expected {
        return Err(EmbedError::Shape {
            expected,
            found: values.dim(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite(format!("{} {modality} output", provider.id())));
    }
    Ok(EmbeddingTensor {
        modality,
        content_hash,
        values,
    })
}

/// Test double for the frozen extractors: output is a pure function of the
/// seed, the modality and the content, uniform in [-1, 1].
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    seed: u64,
    dims: ProviderDims,
}

impl SyntheticProvider {
    pub fn new(seed: u64, dims: ProviderDims) -> Result<Self, EmbedError> {
        for m in Modality::ALL {
            let (r, c) = dims.get(m);
            if r == 0 || c == 0 {
                return Err(EmbedError::Provider(format!("{m} dims must be positive")));
            }
        }
        Ok(Self { seed, dims })
    }

    fn generate(&self, modality: Modality, content: &[u8]) -> Array2<f32> {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(modality.as_str().as_bytes())
            .chain_update(content)
            .finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let (r, c) = self.dims.get(modality);
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0f32..=1.0))
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn config_hash(&self) -> String {
        let dims = serde_json::to_string(&self.dims).expect("dims serialize");
        sha256_hex(&[&self.seed.to_le_bytes(), dims.as_bytes()])
    }

    fn dims(&self) -> ProviderDims {
        self.dims
    }

    fn embed_video(&self, media: &[u8]) -> Result<Array2<f32>, EmbedError> {
        Ok(self.generate(Modality::Video, media))
    }

    fn embed_audio(&self, waveform: &Waveform) -> Result<Array2<f32>, EmbedError> {
        Ok(self.generate(Modality::Audio, &waveform.to_le_bytes()))
    }

    fn embed_text(&self, text: &str, language: LanguageCode) -> Result<Array2<f32>, EmbedError> {
        let content = [language.as_str().as_bytes(), b"\0", text.as_bytes()].concat();
        Ok(self.generate(Modality::Text, &content))
    }
}

/// Adapter for out-of-process extractors (e.g. scripts wrapping pretrained
/// checkpoints).
///
/// Each call runs the configured command with the input on stdin and expects
/// one tensor file on stdout. Video input is the raw media file, audio is
/// little-endian f32 samples at 16 kHz, text is UTF-8 with the language code
/// in `MERA_LANGUAGE`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalProviderConfig {
    pub id: String,
    pub video_command: Vec<String>,
    pub audio_command: Vec<String>,
    pub text_command: Vec<String>,
    pub dims: ProviderDims,
    /// Free-form description of checkpoint and layer choice; hashed into cache keys.
    #[serde(default)]
    pub representation: String,
}

#[derive(Debug, Clone)]
pub struct ExternalProvider {
    config: ExternalProviderConfig,
}

impl ExternalProvider {
    pub fn new(config: ExternalProviderConfig) -> Result<Self, EmbedError> {
        for (name, cmd) in [
            ("video", &config.video_command),
            ("audio", &config.audio_command),
            ("text", &config.text_command),
        ] {
            if cmd.is_empty() {
                return Err(EmbedError::Provider(format!("empty {name} command")));
            }
        }
        Ok(Self { config })
    }

    fn run(&self, command: &[String], input: &[u8], language: Option<LanguageCode>) -> Result<Array2<f32>, EmbedError> {
        let mut cmd = Command::new(&command[0]);
        cmd.args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(lang) = language {
            cmd.env("MERA_LANGUAGE", lang.as_str());
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| EmbedError::Provider(format!("{}: {e}", command[0])))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // a command that ignores stdin closes the pipe early; that is fine
            let _ = stdin.write_all(input);
        }
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(EmbedError::Provider(format!(
                "{} exited with {}: {}",
                command[0],
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let (values, _) = read_tensor(&output.stdout[..])?;
        Ok(values)
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn config_hash(&self) -> String {
        let text = serde_json::to_string(&self.config).expect("config serializes");
        sha256_hex(&[text.as_bytes()])
    }

    fn dims(&self) -> ProviderDims {
        self.config.dims
    }

    fn embed_video(&self, media: &[u8]) -> Result<Array2<f32>, EmbedError> {
        self.run(&self.config.video_command, media, None)
    }

    fn embed_audio(&self, waveform: &Waveform) -> Result<Array2<f32>, EmbedError> {
        let bytes: Vec<u8> = waveform.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        self.run(&self.config.audio_command, &bytes, None)
    }

    fn embed_text(&self, text: &str, language: LanguageCode) -> Result<Array2<f32>, EmbedError> {
        self.run(&self.config.text_command, text.as_bytes(), Some(language))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::embed::tensor_io::encode_tensor;

    fn provider() -> SyntheticProvider {
        SyntheticProvider::new(
            7,
            ProviderDims {
                video: (8, 16),
                audio: (8, 16),
                text: (8, 16),
            },
        )
        .unwrap()
    }

    #[test]
    fn same_text_gives_identical_tensors() {
        let p = provider();
        let a = p.embed_text("Where is the piano?", LanguageCode::En).unwrap();
        let b = p.embed_text("Where is the piano?", LanguageCode::En).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, p.embed_text("Where is the piano?", LanguageCode::Fr).unwrap());
    }

    #[test]
    fn distinct_texts_give_distinct_tensors() {
        let p = provider();
        let outputs: HashSet<Vec<u32>> = (0..100)
            .map(|i| {
                p.embed_text(&format!("question {i}"), LanguageCode::En)
                    .unwrap()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect();
        assert_eq!(outputs.len(), 100);
    }

    #[test]
    fn shape_and_range_contract() {
        let p = provider();
        let wave = Waveform::new(vec![0.1; 100], 16_000);
        for t in [
            p.embed_video(b"bytes").unwrap(),
            p.embed_audio(&wave).unwrap(),
            p.embed_text("x", LanguageCode::Hi).unwrap(),
        ] {
            assert_eq!(t.dim(), (8, 16));
            assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn seed_changes_output_and_config_hash() {
        let a = provider();
        let b = SyntheticProvider::new(8, a.dims()).unwrap();
        assert_ne!(a.embed_video(b"v").unwrap(), b.embed_video(b"v").unwrap());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), provider().config_hash());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(SyntheticProvider::new(1, ProviderDims::uniform(0, 3)).is_err());
    }

    #[test]
    fn embed_checked_enforces_declared_shape() {
        let p = provider();
        let err = embed_checked(&p, Modality::Video, "h".into(), || Ok(Array2::zeros((2, 2))))
            .unwrap_err();
        assert!(matches!(err, EmbedError::Shape { .. }));
    }

    #[test]
    fn external_provider_reads_tensor_from_stdout() {
        let dir = tempfile::tempdir().unwrap();
        let tensor = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f32);
        let (bytes, _) = encode_tensor(&tensor).unwrap();
        let path = dir.path().join("t.bin");
        std::fs::write(&path, bytes).unwrap();
        let cat = vec!["sh".to_string(), "-c".into(), format!("cat > /dev/null; cat {}", path.display())];
        let p = ExternalProvider::new(ExternalProviderConfig {
            id: "ext".into(),
            video_command: cat.clone(),
            audio_command: cat.clone(),
            text_command: vec!["sh".into(), "-c".into(), "test \"$MERA_LANGUAGE\" = de && cat >/dev/null && cat ".to_string() + &path.display().to_string()],
            dims: ProviderDims::uniform(2, 3),
            representation: "last hidden layer".into(),
        })
        .unwrap();
        assert_eq!(p.embed_video(b"xyz").unwrap(), tensor);
        assert_eq!(p.embed_text("Hallo", LanguageCode::De).unwrap(), tensor);
        assert!(p.embed_text("Hallo", LanguageCode::Fr).is_err());
    }
}

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

const TO_TOKENS: [usize; 6] = [0, 1, 3, 2, 4, 5];

fn check_video(shape: &[usize], patch: usize) -> Result<(usize, usize, usize, usize)> {
    if shape.len() != 4 {
        return Err(Error::Dimension(format!("video must be f×H×W×ch, got {shape:?}")));
    }
    let (f, hh, ww, ch) = (shape[0], shape[1], shape[2], shape[3]);
    if patch == 0 || hh % patch != 0 || ww % patch != 0 {
        return Err(Error::Config(format!(
            "frame {hh}x{ww} not divisible by patch {patch}"
        )));
    }
    Ok((f, hh / patch, ww / patch, ch))
}

/// Splits an `f × H × W × ch` video into `(f·h·w) × (p·p·ch)` tokens,
/// ordered frame-major then row then column.
pub fn patchify<T: Scalar>(video: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (f, h, w, ch) = check_video(video.shape(), patch)?;
    video
        .reshape(&[f, h, patch, w, patch, ch])?
        .permute(&TO_TOKENS)?
        .into_reshape(&[f * h * w, patch * patch * ch])
}

/// Inverse of [`patchify`] for a video of shape `[f, H, W, ch]`.
pub fn unpatchify<T: Scalar>(tokens: &Tensor<T>, patch: usize, video_shape: &[usize]) -> Result<Tensor<T>> {
    let (f, h, w, ch) = check_video(video_shape, patch)?;
    if tokens.shape() != [f * h * w, patch * patch * ch] {
        return Err(Error::Dimension(format!(
            "tokens {:?} do not tile video {video_shape:?} with patch {patch}",
            tokens.shape()
        )));
    }
    tokens
        .reshape(&[f, h, w, patch, patch, ch])?
        .permute(&TO_TOKENS)?
        .into_reshape(video_shape)
}

pub(crate) fn patchify_var<T: Scalar>(tape: &mut Tape<T>, video: Var, patch: usize) -> Result<Var> {
    let (f, h, w, ch) = check_video(tape.shape(video), patch)?;
    let v = tape.reshape(video, &[f, h, patch, w, patch, ch])?;
    let v = tape.permute(v, &TO_TOKENS)?;
    tape.reshape(v, &[f * h * w, patch * patch * ch])
}

pub(crate) fn unpatchify_var<T: Scalar>(
    tape: &mut Tape<T>,
    tokens: Var,
    patch: usize,
    video_shape: &[usize],
) -> Result<Var> {
    let (f, h, w, ch) = check_video(video_shape, patch)?;
    let v = tape.reshape(tokens, &[f, h, w, patch, patch, ch])?;
    let v = tape.permute(v, &TO_TOKENS)?;
    tape.reshape(v, video_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_roundtrip() {
        let v = Tensor::<f32>::from_fn(&[8, 16, 16, 3], |i| (i as f32 * 0.37).sin());
        let t = patchify(&v, 4).unwrap();
        assert_eq!(t.shape(), &[128, 48]);
        let back = unpatchify(&t, 4, v.shape()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn constant_video_gives_equal_tokens() {
        let v = Tensor::<f32>::full(&[2, 8, 8, 3], 0.25);
        let t = patchify(&v, 4).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn first_token_is_top_left_patch() {
        let v = Tensor::<f64>::from_fn(&[1, 4, 4, 1], |i| i as f64);
        let t = patchify(&v, 2).unwrap();
        assert_eq!(&t.data()[..4], &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&t.data()[4..8], &[2.0, 3.0, 6.0, 7.0]);
    }

    #[test]
    fn indivisible_frame_is_config_error() {
        let v = Tensor::<f32>::zeros(&[1, 6, 8, 1]);
        assert!(matches!(patchify(&v, 4), Err(Error::Config(_))));
    }
}

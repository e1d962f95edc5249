//! Latency coding of intensity images.

/// Encode pixel intensities as spike earliness: intensity `p > 0` spikes
/// once at `floor((1 - p/255) * (t_in - 1))`, `p = 0` stays silent.
///
/// Output is time-major, `t_in * image.len()` entries.
pub fn latency_encode(image: &[u8], t_in: usize) -> Vec<u8> {
    let n = image.len();
    let mut out = vec![0u8; t_in * n];
    if t_in == 0 {
        return out;
    }
    for (i, &p) in image.iter().enumerate() {
        if p > 0 {
            let t = ((1.0 - f64::from(p) / 255.0) * (t_in - 1) as f64).floor() as usize;
            out[t * n + i] = 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_intensity_spikes_first() {
        let out = latency_encode(&[255], 100);
        assert_eq!(out[0], 1);
        assert_eq!(out.iter().map(|&x| u32::from(x)).sum::<u32>(), 1);
    }

    #[test]
    fn zero_intensity_is_silent() {
        let out = latency_encode(&[0], 100);
        assert!(out.iter().all(|&x| x == 0));
    }

    #[test]
    fn mid_intensity_frozen_step() {
        // p = 128, t_in = 100: floor((1 - 128/255) * 99) = 49.
        let out = latency_encode(&[128], 100);
        assert_eq!(out[49], 1);
        assert_eq!(out.iter().map(|&x| u32::from(x)).sum::<u32>(), 1);
    }

    #[test]
    fn encoding_is_monotone_in_intensity() {
        let t_in = 64;
        let spike_time = |p: u8| -> usize {
            let out = latency_encode(&[p], t_in);
            (0..t_in).find(|&t| out[t] == 1).unwrap()
        };
        for p in 1..255u8 {
            assert!(spike_time(p + 1) <= spike_time(p), "p = {p}");
        }
    }
}

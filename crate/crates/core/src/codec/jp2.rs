//! JPEG2000 (JP2 container) through the OpenJPEG C library, with in-memory
//! streams.

use std::ffi::{c_char, c_void, CStr};
use std::ptr;

use ndarray::{Array3, ArrayView3};
use openjpeg_sys as opj;

use crate::error::{DsmError, Result};

const FORMAT: &str = "JPEG2000";

struct WriteBuf {
    data: Vec<u8>,
    pos: usize,
}

struct ReadBuf<'a> {
    data: &'a [u8],
    pos: usize,
}

unsafe extern "C" fn write_fn(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let w = &mut *(user as *mut WriteBuf);
    let src = std::slice::from_raw_parts(buf as *const u8, n);
    let end = w.pos + n;
    if end > w.data.len() {
        w.data.resize(end, 0);
    }
    w.data[w.pos..end].copy_from_slice(src);
    w.pos = end;
    n
}

unsafe extern "C" fn write_skip_fn(n: i64, user: *mut c_void) -> i64 {
    let w = &mut *(user as *mut WriteBuf);
    let target = w.pos as i64 + n;
    if target < 0 {
        return -1;
    }
    w.pos = target as usize;
    if w.pos > w.data.len() {
        w.data.resize(w.pos, 0);
    }
    n
}

unsafe extern "C" fn write_seek_fn(n: i64, user: *mut c_void) -> i32 {
    let w = &mut *(user as *mut WriteBuf);
    if n < 0 {
        return 0;
    }
    w.pos = n as usize;
    if w.pos > w.data.len() {
        w.data.resize(w.pos, 0);
    }
    1
}

unsafe extern "C" fn read_fn(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let r = &mut *(user as *mut ReadBuf);
    let left = r.data.len().saturating_sub(r.pos);
    if left == 0 {
        return usize::MAX;
    }
    let k = n.min(left);
    ptr::copy_nonoverlapping(r.data.as_ptr().add(r.pos), buf as *mut u8, k);
    r.pos += k;
    k
}

unsafe extern "C" fn read_skip_fn(n: i64, user: *mut c_void) -> i64 {
    let r = &mut *(user as *mut ReadBuf);
    let target = (r.pos as i64 + n).clamp(0, r.data.len() as i64);
    let moved = target - r.pos as i64;
    r.pos = target as usize;
    moved
}

unsafe extern "C" fn read_seek_fn(n: i64, user: *mut c_void) -> i32 {
    let r = &mut *(user as *mut ReadBuf);
    if n < 0 || n as usize > r.data.len() {
        return 0;
    }
    r.pos = n as usize;
    1
}

unsafe extern "C" fn collect_message(msg: *const c_char, user: *mut c_void) {
    if msg.is_null() || user.is_null() {
        return;
    }
    let sink = &mut *(user as *mut String);
    sink.push_str(CStr::from_ptr(msg).to_string_lossy().trim_end());
    sink.push_str("; ");
}

/// Owns the C handles of one encode or decode call.
struct Handles {
    codec: *mut opj::opj_codec_t,
    stream: *mut opj::opj_stream_t,
    image: *mut opj::opj_image_t,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            if !self.stream.is_null() {
                opj::opj_stream_destroy(self.stream);
            }
            if !self.codec.is_null() {
                opj::opj_destroy_codec(self.codec);
            }
            if !self.image.is_null() {
                opj::opj_image_destroy(self.image);
            }
        }
    }
}

fn resolutions_for(width: usize, height: usize) -> i32 {
    let mut levels = 6;
    while levels > 1 && (1usize << (levels - 1)) > width.min(height) {
        levels -= 1;
    }
    levels
}

/// Irreversible (9/7) single-layer encode with OpenJPEG's rate parameter,
/// which is the ratio of raw sample bytes to codestream bytes.
pub(crate) fn encode_with_rate(frame: ArrayView3<u8>, rate: f32) -> Result<Vec<u8>> {
    let (h, w, ch) = frame.dim();
    let fail = |reason: String| DsmError::Encode {
        format: FORMAT,
        reason,
    };
    let color_space = match ch {
        1 => opj::COLOR_SPACE::OPJ_CLRSPC_GRAY,
        3 => opj::COLOR_SPACE::OPJ_CLRSPC_SRGB,
        n => return Err(DsmError::ChannelLayout(format!("{n} channels"))),
    };
    let mut messages = String::new();
    let mut out = WriteBuf {
        data: Vec::with_capacity(h * w * ch / rate.max(1.0) as usize + 1024),
        pos: 0,
    };

    unsafe {
        let mut comp: opj::opj_image_cmptparm_t = std::mem::zeroed();
        comp.dx = 1;
        comp.dy = 1;
        comp.w = w as u32;
        comp.h = h as u32;
        comp.prec = 8;
        comp.bpp = 8;
        comp.sgnd = 0;
        let mut comps = vec![comp; ch];

        let mut handles = Handles {
            codec: ptr::null_mut(),
            stream: ptr::null_mut(),
            image: opj::opj_image_create(ch as u32, comps.as_mut_ptr(), color_space),
        };
        if handles.image.is_null() {
            return Err(fail("image allocation failed".into()));
        }
        let image = &mut *handles.image;
        image.x0 = 0;
        image.y0 = 0;
        image.x1 = w as u32;
        image.y1 = h as u32;
        for c in 0..ch {
            let dst = std::slice::from_raw_parts_mut((*image.comps.add(c)).data, h * w);
            for (d, s) in dst.iter_mut().zip(frame.slice(ndarray::s![.., .., c]).iter()) {
                *d = *s as i32;
            }
        }

        let mut params: opj::opj_cparameters_t = std::mem::zeroed();
        opj::opj_set_default_encoder_parameters(&mut params);
        params.tcp_numlayers = 1;
        params.tcp_rates[0] = rate;
        params.cp_disto_alloc = 1;
        params.irreversible = 1;
        params.numresolution = resolutions_for(w, h);
        params.tcp_mct = if ch == 3 { 1 } else { 0 };

        handles.codec = opj::opj_create_compress(opj::CODEC_FORMAT::OPJ_CODEC_JP2);
        if handles.codec.is_null() {
            return Err(fail("codec allocation failed".into()));
        }
        let sink = &mut messages as *mut String as *mut c_void;
        opj::opj_set_error_handler(handles.codec, Some(collect_message), sink);
        if opj::opj_setup_encoder(handles.codec, &mut params, handles.image) == 0 {
            return Err(fail(format!("encoder setup rejected: {messages}")));
        }

        handles.stream = opj::opj_stream_create(1 << 16, 0);
        if handles.stream.is_null() {
            return Err(fail("stream allocation failed".into()));
        }
        opj::opj_stream_set_user_data(handles.stream, &mut out as *mut WriteBuf as *mut c_void, None);
        opj::opj_stream_set_write_function(handles.stream, Some(write_fn));
        opj::opj_stream_set_skip_function(handles.stream, Some(write_skip_fn));
        opj::opj_stream_set_seek_function(handles.stream, Some(write_seek_fn));

        let ok = opj::opj_start_compress(handles.codec, handles.image, handles.stream) != 0
            && opj::opj_encode(handles.codec, handles.stream) != 0
            && opj::opj_end_compress(handles.codec, handles.stream) != 0;
        drop(handles);
        if !ok {
            return Err(fail(format!("compression failed: {messages}")));
        }
    }
    Ok(out.data)
}

/// Decodes a JP2 file or raw J2K codestream to `(row, column, channel)`.
pub(crate) fn decode(bytes: &[u8]) -> Result<Array3<u8>> {
    let fail = |reason: String| DsmError::Decode {
        format: FORMAT,
        reason,
    };
    let format = if bytes.starts_with(&[0xFF, 0x4F, 0xFF, 0x51]) {
        opj::CODEC_FORMAT::OPJ_CODEC_J2K
    } else {
        opj::CODEC_FORMAT::OPJ_CODEC_JP2
    };
    let mut messages = String::new();
    let mut input = ReadBuf { data: bytes, pos: 0 };

    unsafe {
        let mut handles = Handles {
            codec: opj::opj_create_decompress(format),
            stream: ptr::null_mut(),
            image: ptr::null_mut(),
        };
        if handles.codec.is_null() {
            return Err(fail("codec allocation failed".into()));
        }
        let sink = &mut messages as *mut String as *mut c_void;
        opj::opj_set_error_handler(handles.codec, Some(collect_message), sink);
        let mut params: opj::opj_dparameters_t = std::mem::zeroed();
        opj::opj_set_default_decoder_parameters(&mut params);
        if opj::opj_setup_decoder(handles.codec, &mut params) == 0 {
            return Err(fail(format!("decoder setup rejected: {messages}")));
        }
        opj::opj_decoder_set_strict_mode(handles.codec, 1);

        handles.stream = opj::opj_stream_create(1 << 16, 1);
        if handles.stream.is_null() {
            return Err(fail("stream allocation failed".into()));
        }
        opj::opj_stream_set_user_data(handles.stream, &mut input as *mut ReadBuf as *mut c_void, None);
        opj::opj_stream_set_user_data_length(handles.stream, bytes.len() as u64);
        opj::opj_stream_set_read_function(handles.stream, Some(read_fn));
        opj::opj_stream_set_skip_function(handles.stream, Some(read_skip_fn));
        opj::opj_stream_set_seek_function(handles.stream, Some(read_seek_fn));

        if opj::opj_read_header(handles.stream, handles.codec, &mut handles.image) == 0 {
            return Err(fail(format!("unreadable header: {messages}")));
        }
        if opj::opj_decode(handles.codec, handles.stream, handles.image) == 0
            || opj::opj_end_decompress(handles.codec, handles.stream) == 0
        {
            return Err(fail(format!("corrupt or truncated codestream: {messages}")));
        }

        let image = &*handles.image;
        let n = image.numcomps as usize;
        let ch = match n {
            1 | 2 => 1,
            _ => 3,
        };
        let comps = std::slice::from_raw_parts(image.comps, n);
        let (w, h) = (comps[0].w as usize, comps[0].h as usize);
        if comps[..ch].iter().any(|c| c.w as usize != w || c.h as usize != h || c.data.is_null()) {
            return Err(fail("subsampled or missing components are not supported".into()));
        }
        let mut out = Array3::zeros((h, w, ch));
        for (c, comp) in comps[..ch].iter().enumerate() {
            let shift = comp.prec as i32 - 8;
            let offset = if comp.sgnd != 0 { 1i32 << (comp.prec - 1) } else { 0 };
            let data = std::slice::from_raw_parts(comp.data, w * h);
            for (i, &v) in data.iter().enumerate() {
                let v = v + offset;
                let v = if shift > 0 { v >> shift } else { v << (-shift) };
                out[[i / w, i % w, c]] = v.clamp(0, 255) as u8;
            }
        }
        Ok(out)
    }
}

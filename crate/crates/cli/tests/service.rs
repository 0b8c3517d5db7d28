use std::net::SocketAddr;

use irisdeform::pipeline::Config;
use irisdeform::synth::{render_iris, IrisTexture};
use irisdeform::{GrayImage, IrisCircles, IrisMask};
use irisdeform_cli::server::{router, ServiceState};
use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;
use reqwest::StatusCode;

struct Service {
    addr: SocketAddr,
    _rt: tokio::runtime::Runtime,
    _ui: tempfile::TempDir,
}

fn start(config: Config) -> Service {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>examiner</html>").unwrap();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(ServiceState::new(config, ui.path()));
    rt.spawn(async move { axum::serve(listener, app).await });
    Service {
        addr,
        _rt: rt,
        _ui: ui,
    }
}

fn eye() -> (Vec<u8>, Vec<u8>) {
    let c = IrisCircles::concentric(128.0, 128.0, 35.0, 100.0).unwrap();
    let (img, mask) = render_iris(&IrisTexture::random(9), &c, 256, 256, |u| u).unwrap();
    (img.encode_png().unwrap(), mask.encode_png().unwrap())
}

fn png(bytes: &[u8]) -> Part {
    Part::bytes(bytes.to_vec()).mime_str("image/png").unwrap()
}

fn post(s: &Service, route: &str, form: Form) -> reqwest::blocking::Response {
    Client::new()
        .post(format!("http://{}{route}", s.addr))
        .multipart(form)
        .send()
        .unwrap()
}

fn error_name(resp: reqwest::blocking::Response) -> String {
    let body: serde_json::Value = resp.json().unwrap();
    assert!(body["message"].is_string());
    body["error"].as_str().unwrap().to_string()
}

#[test]
fn health_and_ui() {
    let s = start(Config::default());
    let body: serde_json::Value = reqwest::blocking::get(format!("http://{}/health", s.addr))
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(body["status"], "ok");
    let page = reqwest::blocking::get(format!("http://{}/ui/index.html", s.addr)).unwrap();
    assert_eq!(page.status(), StatusCode::OK);
    assert!(page.text().unwrap().contains("examiner"));
}

#[test]
fn deform_onto_own_mask_is_near_identity() {
    let s = start(Config::default());
    let (img, mask) = eye();
    let form = Form::new()
        .part("image", png(&img))
        .part("mask", png(&mask))
        .part("target", png(&mask))
        .text("model", "biomech");
    let resp = post(&s, "/deform", form);
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let out = GrayImage::decode_png(&resp.bytes().unwrap()).unwrap();
    let src = GrayImage::decode_png(&img).unwrap();
    let m = IrisMask::decode_png(&mask).unwrap();
    let (mut err, mut n) = (0.0, 0.0);
    for y in 0..256 {
        for x in 0..256 {
            if m.get(x, y) {
                err += (f64::from(src.get(x, y)) - f64::from(out.get(x, y))).abs();
                n += 1.0;
            }
        }
    }
    assert!(err / n < 3.0, "mean abs error {}", err / n);
}

#[test]
fn deform_by_alpha() {
    let s = start(Config::default());
    let (img, mask) = eye();
    let form = Form::new()
        .part("image", png(&img))
        .part("mask", png(&mask))
        .text("alpha", "0.5");
    let resp = post(&s, "/deform", form);
    assert_eq!(resp.status(), StatusCode::OK);
}

#[test]
fn external_model_without_endpoint_is_unavailable() {
    let s = start(Config::default());
    let (img, mask) = eye();
    let form = Form::new()
        .part("image", png(&img))
        .part("mask", png(&mask))
        .part("target", png(&mask))
        .text("model", "external");
    let resp = post(&s, "/deform", form);
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_name(resp), "ExternalUnavailable");
}

#[test]
fn mask_target_ops() {
    let s = start(Config::default());
    let (_, mask) = eye();
    let form = Form::new()
        .part("mask", png(&mask))
        .text("op", "dilate")
        .text("radius", "50");
    let resp = post(&s, "/mask/target", form);
    assert_eq!(resp.status(), StatusCode::OK);
    let dilated = IrisMask::decode_png(&resp.bytes().unwrap()).unwrap();
    let original = IrisMask::decode_png(&mask).unwrap();
    assert!(dilated.is_subset_of(&original));
    assert!(dilated.count() < original.count());

    let form = Form::new()
        .part("mask", png(&mask))
        .text("op", "circular")
        .text("alpha", "0.3");
    assert_eq!(post(&s, "/mask/target", form).status(), StatusCode::OK);
}

#[test]
fn malformed_requests_are_rejected() {
    let s = start(Config::default());
    let (img, mask) = eye();
    // missing part
    let resp = post(&s, "/match", Form::new().part("image_a", png(&img)));
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    // not a PNG
    let form = Form::new()
        .part("mask", png(b"nope"))
        .text("op", "dilate")
        .text("radius", "50");
    assert_eq!(
        post(&s, "/mask/target", form).status(),
        StatusCode::BAD_REQUEST
    );
    // unknown op
    let form = Form::new().part("mask", png(&mask)).text("op", "shrink");
    assert_eq!(
        post(&s, "/mask/target", form).status(),
        StatusCode::BAD_REQUEST
    );
}

#[test]
fn geometric_failures_are_unprocessable() {
    let s = start(Config::default());
    let (_, mask) = eye();
    // dilation radius below the current pupil
    let form = Form::new()
        .part("mask", png(&mask))
        .text("op", "dilate")
        .text("radius", "10");
    assert_eq!(
        post(&s, "/mask/target", form).status(),
        StatusCode::UNPROCESSABLE_ENTITY
    );
    // a mask with no iris cannot be fitted
    let empty = IrisMask::empty(64, 64).unwrap().encode_png().unwrap();
    let form = Form::new()
        .part("mask", png(&empty))
        .text("op", "circular")
        .text("alpha", "0.3");
    assert_eq!(
        post(&s, "/mask/target", form).status(),
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

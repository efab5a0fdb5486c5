#![allow(dead_code)]

use std::path::PathBuf;

use reqwest::{Client, Method, RequestBuilder, Response, StatusCode};
use seminar_api::{ApiConfig, AppState, ErrorBody, LoginResponse};
use seminar_core::{ops, PasswordHasher, Role, Store, StoreConfig};
use serde_json::Value;
use tempfile::TempDir;

pub const ADMIN: (&str, &str) = ("admin@example.edu", "admin-password");

pub fn student(n: usize) -> (String, String) {
    (format!("student{n}@example.edu"), format!("student-{n}-password"))
}

pub struct TestServer {
    pub base: String,
    pub client: Client,
    pub store: Store,
    pub dir: TempDir,
}

impl TestServer {
    /// Fresh store with one administrator and `students` students.
    pub async fn start(students: usize, config: ApiConfig) -> TestServer {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(&StoreConfig::in_dir(dir.path())).unwrap();
        store.migrate().unwrap();
        let hasher = PasswordHasher::fast();
        store.ensure_admin(&hasher, ADMIN.0, ADMIN.1).unwrap();
        store
            .write(|s| {
                for n in 1..=students {
                    let (email, pw) = student(n);
                    ops::create_user(s, &email, hasher.hash(&pw)?, &format!("Student {n}"), Role::Student)?;
                }
                Ok(())
            })
            .unwrap();

        let state = AppState::new(store.clone(), hasher, config);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(seminar_api::serve(listener, state, std::future::pending()));
        TestServer {
            base,
            client: Client::new(),
            store,
            dir,
        }
    }

    pub fn files_dir(&self) -> PathBuf {
        self.dir.path().join("files")
    }

    pub fn req(&self, method: Method, path: &str, token: Option<&str>) -> RequestBuilder {
        let r = self.client.request(method, format!("{}{}", self.base, path));
        match token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    pub async fn login(&self, email: &str, password: &str) -> LoginResponse {
        let res = self
            .req(Method::POST, "/api/login", None)
            .json(&serde_json::json!({"email": email, "password": password}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        res.json().await.unwrap()
    }

    pub async fn admin(&self) -> String {
        self.login(ADMIN.0, ADMIN.1).await.token
    }

    pub async fn student(&self, n: usize) -> String {
        let (email, pw) = student(n);
        self.login(&email, &pw).await.token
    }

    pub async fn call(&self, method: Method, path: &str, token: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut r = self.req(method, path, Some(token));
        if let Some(b) = body {
            r = r.json(&b);
        }
        decode(r.send().await.unwrap()).await
    }

    /// Creates an approved theme as the administrator; returns its id.
    pub async fn theme(&self, admin: &str, title: &str, max: u32) -> i64 {
        let (status, body) = self
            .call(
                Method::POST,
                "/api/themes",
                admin,
                Some(serde_json::json!({"title": title, "keywords": ["news"], "max_students": max})),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["id"].as_i64().unwrap()
    }
}

pub async fn decode(res: Response) -> (StatusCode, Value) {
    let status = res.status();
    let text = res.text().await.unwrap();
    let value = if text.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&text).unwrap_or(Value::String(text))
    };
    (status, value)
}

pub fn error_code(body: &Value) -> String {
    serde_json::from_value::<ErrorBody>(body.clone())
        .map(|e| e.code)
        .unwrap_or_else(|_| panic!("not an error body: {body}"))
}
